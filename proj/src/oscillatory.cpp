#include "fiolab/oscillatory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fiolab {

int fft_friendly(int n) {
    int m = std::max(4, n + (n & 1));
    for (;; m += 2) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

std::string to_string(KernelMethod m) {
    switch (m) {
        case KernelMethod::multiplier: return "multiplier";
        case KernelMethod::projective: return "projective";
        case KernelMethod::direct: return "direct";
        default: return "automatic";
    }
}

namespace {

bool on_band_edge(const GridSpec& g, const Vec& xi) {
    for (int i = 0; i < g.n; ++i)
        if (std::abs(xi(i)) >= 0.98 * g.nyquist(i)) return true;
    return false;
}

double lattice_volume(const GridSpec& g) {
    double v = 1.0;
    for (int i = 0; i < g.n; ++i) v /= g.L[i];
    return v;
}

void omega_grid(const Vec& c, double R, int m, const std::function<void(const Vec&)>& f) {
    const int d = static_cast<int>(c.size());
    const int total = d == 1 ? m : (d == 2 ? m * m : 1);
    Vec om(d);
    for (int a = 0; a < total; ++a) {
        int r = a;
        for (int i = 0; i < d; ++i, r /= m) om(i) = c(i) - R + 2 * R * (r % m) / (m - 1);
        if ((om - c).norm() <= R * (1 + 1e-12)) f(om);
    }
}

double support_half_width(const ProjectiveAmplitude& amp) { return std::min(amp.amp_x_half_width(), 3.0); }

void x_grid(int n, double w, int m, const std::function<void(const Vec&)>& f) {
    int total = 1;
    for (int i = 0; i < n; ++i) total *= m;
    Vec x(n);
    for (int a = 0; a < total; ++a) {
        int r = a;
        for (int i = 0; i < n; ++i, r /= m) x(i) = -w + 2 * w * (r % m) / (m - 1);
        f(x);
    }
}

}  // namespace

GriddedFunction apply_multiplier(const GriddedFunction& f, const std::function<Complex(const Vec&)>& m,
                                 bool check_band) {
    Spectrum s = forward_fft(f);
    const long long sz = static_cast<long long>(s.coeffs.size());
    double edge = 0.0, peak = 0.0;
    for (long long j = 0; j < sz; ++j) {
        const Vec xi = s.grid.frequency(j);
        const Complex v = m(xi);
        const double a = std::abs(v);
        peak = std::max(peak, a);
        if (check_band && on_band_edge(s.grid, xi)) edge = std::max(edge, a);
        s.coeffs[j] *= v;
    }
    if (check_band && edge > 1e-12 * peak) throw AliasingError("apply_multiplier: multiplier reaches the Nyquist band edge");
    return inverse_fft(std::move(s));
}

GriddedFunction apply_fio(const PhaseFunction& phase, const SymbolFunction& a, const GriddedFunction& f, Exec exec,
                          bool check_band) {
    if (phase.dim() != f.grid.n || a.dim() != f.grid.n) throw PreconditionError("apply_fio: dimension mismatch");
    const GridSpec& g = f.grid;
    const Spectrum s = forward_fft(f);
    std::vector<Vec> xis;
    std::vector<Complex> fh;
    const Vec xc = Eigen::Map<const Eigen::VectorXd>(g.center.data(), g.n);
    double edge = 0.0, peak = 0.0, fmax = 0.0;
    for (const Complex& c : s.coeffs) fmax = std::max(fmax, std::abs(c));
    for (std::size_t j = 0; j < s.coeffs.size(); ++j) {
        // coefficients below round-off of the largest one contribute nothing
        if (std::abs(s.coeffs[j]) <= 1e-17 * fmax) continue;
        const Vec xi = g.frequency(j);
        if (check_band) {
            // band content of a(x_c, .) fhat
            const double m = std::abs(a.eval(xc, xi) * s.coeffs[j]);
            peak = std::max(peak, m);
            if (on_band_edge(g, xi)) edge = std::max(edge, m);
        }
        xis.push_back(xi);
        fh.push_back(s.coeffs[j]);
    }
    if (edge > 1e-12 * peak) throw AliasingError("apply_fio: symbol times input reaches the Nyquist band edge");
    const double dxi = lattice_volume(g);
    GriddedFunction out(g);
    const long long sz = static_cast<long long>(g.size());
    auto body = [&](long long i) {
        const Vec x = g.point(i);
        Complex acc = 0.0;
        for (std::size_t j = 0; j < xis.size(); ++j) {
            const Complex av = a.eval(x, xis[j]);
            if (av == 0.0) continue;
            acc += av * fh[j] * cis(phase.eval(x, xis[j]));
        }
        out.values[i] = acc * dxi;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (long long i = 0; i < sz; ++i) body(i);
    } else {
        for (long long i = 0; i < sz; ++i) body(i);
    }
    return out;
}

// --- projective evaluation ----------------------------------------------------

ProjectiveKernel::ProjectiveKernel(const PhaseFunction& phase, const ProjectiveAmplitude& amp, Vec y, double tolerance)
    : phase_(phase), amp_(amp), y_(std::move(y)), n_(phase.dim()), d_(phase.dim() - 1) {
    if (amp.amp_dim() != n_ || y_.size() != n_) throw PreconditionError("ProjectiveKernel: dimension mismatch");
    hi_ = amp.radial_hi();
    if (!std::isfinite(hi_)) throw PreconditionError("ProjectiveKernel: radial factor must have compact support");
    const ProjectiveAmplitude* ap = &amp;
    G_ = std::make_shared<RadialProfileTransform>(n_, [ap](double t) { return ap->radial(t); }, amp.radial_lo(), hi_,
                                                  tolerance);
    c_ = amp.omega_center();
    R_ = amp.omega_radius();
    leaf_width_ = amp.omega_scale();

    // bound on the omega-Hessian of Theta / r, sampled then padded
    auto grad_s = [&](const Vec& x, const Vec& om) {
        const Vec xi = lift(om);
        const Vec g = phase_.grad_xi(x, xi);
        const double r = xi.norm();
        const double th = phase_.eval(x, xi) - y_.dot(xi);
        Vec gs = (g.head(d_) - y_.head(d_)) / r - th * om / (r * r * r);
        return gs;
    };
    const double w = support_half_width(amp);
    double hmax = 0.0;
    const double fd = 1e-5;
    x_grid(n_, w, 5, [&](const Vec& x) {
        omega_grid(c_, R_, 9, [&](const Vec& om) {
            double fro = 0.0;
            for (int j = 0; j < d_; ++j) {
                Vec p = om, q = om;
                p(j) += fd;
                q(j) -= fd;
                fro += ((grad_s(x, p) - grad_s(x, q)) / (2 * fd)).squaredNorm();
            }
            hmax = std::max(hmax, std::sqrt(fro));
        });
    });
    hess_bound_ = 1.5 * hmax + 0.1;
}

Complex ProjectiveKernel::leaf(const Vec& x, const Vec& pc, double hw) const {
    const auto& gl = gauss_legendre(16);
    Complex acc = 0.0;
    Vec om(d_);
    if (d_ == 1) {
        for (int a = 0; a < 16; ++a) {
            om(0) = pc(0) + hw * gl.nodes[a];
            const Complex A = amp_.angular(x, om);
            if (A == 0.0) continue;
            const Vec xi = lift(om);
            const double r = xi.norm();
            const double th = phase_.eval(x, xi) - y_.dot(xi);
            acc += gl.weights[a] * A * std::pow(r, -n_) * (*G_)(th / r);
        }
        return acc * hw;
    }
    for (int a = 0; a < 16; ++a) {
        for (int b = 0; b < 16; ++b) {
            om(0) = pc(0) + hw * gl.nodes[a];
            om(1) = pc(1) + hw * gl.nodes[b];
            const Complex A = amp_.angular(x, om);
            if (A == 0.0) continue;
            const Vec xi = lift(om);
            const double r = xi.norm();
            const double th = phase_.eval(x, xi) - y_.dot(xi);
            acc += gl.weights[a] * gl.weights[b] * A * std::pow(r, -n_) * (*G_)(th / r);
        }
    }
    return acc * hw * hw;
}

Complex ProjectiveKernel::panel(const Vec& x, const Vec& pc, double hw) const {
    const double rho = hw * std::sqrt(double(d_));
    if ((pc - c_).norm() - rho > R_) return 0.0;
    const Vec xi = lift(pc);
    const double r = xi.norm();
    const Vec g = phase_.grad_xi(x, xi);
    const double th = phase_.eval(x, xi) - y_.dot(xi);
    const double s = th / r;
    const double gs = ((g.head(d_) - y_.head(d_)) / r - th * pc / (r * r * r)).norm();
    const double S = G_->cutoff();
    if (std::abs(s) - gs * rho - 0.5 * hess_bound_ * rho * rho > S) return 0.0;
    const double cycles = hi_ * (gs + hess_bound_ * rho) * 2 * rho;
    if ((cycles <= 2.0 && hw <= leaf_width_) || hw < 1e-7) return leaf(x, pc, hw);
    const double h2 = 0.5 * hw;
    Complex acc = 0.0;
    Vec q(d_);
    for (int m = 0; m < (1 << d_); ++m) {
        for (int i = 0; i < d_; ++i) q(i) = pc(i) + ((m >> i) & 1 ? h2 : -h2);
        acc += panel(x, q, h2);
    }
    return acc;
}

Complex ProjectiveKernel::operator()(const Vec& x) const {
    const double w = amp_.amp_x_half_width();
    for (int i = 0; i < n_; ++i)
        if (std::abs(x(i)) >= w) return 0.0;
    if (amp_.x_separable() && amp_.spatial(x) == 0.0) return 0.0;
    const int m = std::max(1, static_cast<int>(std::ceil(R_ / 0.0625)));
    const double hw = R_ / m;
    Complex acc = 0.0;
    Vec pc(d_);
    const int total = d_ == 1 ? m : m * m;
    for (int a = 0; a < total; ++a) {
        int r = a;
        for (int i = 0; i < d_; ++i, r /= m) pc(i) = c_(i) - R_ + (2 * (r % m) + 1) * hw;
        acc += panel(x, pc, hw);
    }
    return acc;
}

// --- multiplier path ------------------------------------------------------------

bool multiplier_path_available(const PhaseFunction& phase, const ProjectiveAmplitude& amp) {
    return (phase.translation_invariant() || phase.x_independent_gradient()) && amp.x_separable();
}

Complex kernel_multiplier(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, const Vec& eta) {
    const int n = phase.dim();
    const double en = eta(n - 1);
    if (!(en > 0.0)) return 0.0;
    const Vec c = amp.omega_center();
    const double R = amp.omega_radius();
    if (phase.translation_invariant()) {
        const Vec om = eta.head(n - 1) / en;
        if ((om - c).norm() > R) return 0.0;
        const double g = amp.radial(eta.norm());
        if (g == 0.0) return 0.0;
        const Complex A = amp.angular_only(om);
        if (A == 0.0) return 0.0;
        return A * g * cis(phase.symbol_phase(eta) - y.dot(eta));
    }
    // grad_x Phi = Z(xi): pull the lattice point back through Z
    const double en_norm = eta.norm();
    if (en_norm < 0.5 * amp.radial_lo() || en_norm > 2.0 * amp.radial_hi()) return 0.0;
    if ((eta.head(n - 1) / en).norm() > 2.0 * (c.norm() + R) + 0.2) return 0.0;
    const Vec zero = Vec::Zero(n);
    Vec xi;
    try {
        xi = invert_grad_x(phase, zero, eta, ConeSpec{4.0, 0.5}).cartesian();
    } catch (const Error&) {
        return 0.0;
    }
    const Vec om = xi.head(n - 1) / xi(n - 1);
    if ((om - c).norm() > R) return 0.0;
    const double g = amp.radial(xi.norm());
    if (g == 0.0) return 0.0;
    const Complex A = amp.angular_only(om);
    if (A == 0.0) return 0.0;
    const double jac = std::abs(phase.mixed_hess(zero, xi).determinant());
    return A * g / jac * cis(phase.eval(zero, xi) - y.dot(xi));
}

// --- footprint and grids -------------------------------------------------------------

Footprint singular_footprint(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y) {
    const int n = phase.dim();
    Footprint fp{Vec::Constant(n, std::numeric_limits<double>::infinity()),
                 Vec::Constant(n, -std::numeric_limits<double>::infinity())};
    const Vec zero = Vec::Zero(n);
    omega_grid(amp.omega_center(), amp.omega_radius(), n == 2 ? 65 : 17, [&](const Vec& om) {
        const Vec th = lift(om);
        Vec x = y - phase.grad_xi(zero, th);
        for (int it = 0; it < 40; ++it) {
            const Vec F = phase.grad_xi(x, th) - y;
            if (F.norm() < 1e-12) break;
            const Mat M = phase.mixed_hess(x, th);
            x -= M.transpose().partialPivLu().solve(F);
            if (!x.allFinite() || x.norm() > 1e3) return;
        }
        if ((phase.grad_xi(x, th) - y).norm() > 1e-8) return;
        fp.lo = fp.lo.cwiseMin(x);
        fp.hi = fp.hi.cwiseMax(x);
    });
    if (!(fp.lo(0) <= fp.hi(0))) {
        fp.lo = y;
        fp.hi = y;
    }
    return fp;
}

Vec kernel_frequency_extent(const PhaseFunction& phase, const ProjectiveAmplitude& amp) {
    const int n = phase.dim();
    Vec ext = Vec::Zero(n);
    const double hi = amp.radial_hi();
    const double w = support_half_width(amp);
    x_grid(n, w, phase.translation_invariant() ? 2 : 5, [&](const Vec& x) {
        omega_grid(amp.omega_center(), amp.omega_radius(), n == 2 ? 33 : 9, [&](const Vec& om) {
            const Vec th = lift(om);
            const Vec g = phase.grad_x(x, th) * (hi / th.norm());
            ext = ext.cwiseMax(g.cwiseAbs());
        });
    });
    return ext;
}

GridSpec kernel_grid(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, double margin,
                     double oversample, bool clip) {
    const int n = phase.dim();
    const Footprint fp = singular_footprint(phase, amp, y);
    const Vec ext = kernel_frequency_extent(phase, amp);
    const double w = amp.amp_x_half_width();
    std::array<int, 3> N{1, 1, 1};
    std::array<double, 3> L{1, 1, 1}, c{0, 0, 0};
    for (int i = 0; i < n; ++i) {
        double lo = fp.lo(i) - margin, hi = fp.hi(i) + margin;
        if (clip && std::isfinite(w)) {
            lo = std::max(lo, -w);
            hi = std::min(hi, w);
            if (!(hi > lo)) {
                // footprint outside the support: keep a sliver so callers get an all-zero row
                lo = -w;
                hi = -w + 2 * w / 16;
            }
        }
        L[i] = hi - lo;
        c[i] = 0.5 * (hi + lo);
        N[i] = fft_friendly(static_cast<int>(std::ceil(2.0 * oversample * ext(i) * L[i])));
    }
    return GridSpec::box(n, N, L, c);
}

double frame_fraction(const GriddedFunction& f, double frame, const std::array<bool, 6>& skip_face) {
    const GridSpec& g = f.grid;
    int band[3] = {0, 0, 0};
    for (int i = 0; i < g.n; ++i) band[i] = std::max(1, static_cast<int>(std::ceil(frame * g.N[i])));
    double tot = 0.0, fr = 0.0;
    for (std::size_t j = 0; j < f.values.size(); ++j) {
        const double a = std::abs(f.values[j]);
        if (a == 0.0) continue;
        tot += a;
        const auto idx = g.unflatten(j);
        for (int i = 0; i < g.n; ++i) {
            if ((!skip_face[2 * i] && idx[i] < band[i]) || (!skip_face[2 * i + 1] && idx[i] >= g.N[i] - band[i])) {
                fr += a;
                break;
            }
        }
    }
    return tot > 0 ? fr / tot : 0.0;
}

KernelRow kernel_row_on(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, const GridSpec& grid,
                        const KernelRowOptions& opts) {
    if (phase.dim() != grid.n || amp.amp_dim() != grid.n || y.size() != grid.n)
        throw PreconditionError("kernel_row: dimension mismatch");
    if (static_cast<double>(grid.size()) > opts.max_points) throw ResourceError("kernel_row: grid exceeds the point budget");
    KernelMethod method = opts.method;
    if (method == KernelMethod::automatic)
        method = multiplier_path_available(phase, amp) ? KernelMethod::multiplier : KernelMethod::projective;
    if (method == KernelMethod::multiplier && !multiplier_path_available(phase, amp))
        throw PreconditionError("kernel_row: multiplier path needs an x-separable amplitude and x-independent grad_x Phi");
    const bool par = opts.exec == Exec::parallel;
    const long long sz = static_cast<long long>(grid.size());
    KernelRow row;
    row.method = method;
    row.values = GriddedFunction(grid);
    auto& v = row.values.values;

    if (method == KernelMethod::multiplier) {
        double edge = 0.0, peak = 0.0;
        auto fill = [&](long long j) {
            const Vec eta = grid.frequency(j);
            v[j] = kernel_multiplier(phase, amp, y, eta);
        };
        if (par) {
#pragma omp parallel for schedule(dynamic, 256)
            for (long long j = 0; j < sz; ++j) fill(j);
        } else {
            for (long long j = 0; j < sz; ++j) fill(j);
        }
        for (long long j = 0; j < sz; ++j) {
            const double a = std::abs(v[j]);
            if (a == 0.0) continue;
            peak = std::max(peak, a);
            if (on_band_edge(grid, grid.frequency(j))) edge = std::max(edge, a);
        }
        if (edge > 1e-12 * peak) throw AliasingError("kernel_row: kernel spectrum reaches the Nyquist band edge");
        fft_inverse_inplace(grid, v);
        auto sp = [&](long long i) { v[i] *= amp.spatial(grid.point(i)); };
        if (par) {
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < sz; ++i) sp(i);
        } else {
            for (long long i = 0; i < sz; ++i) sp(i);
        }
    } else if (method == KernelMethod::projective) {
        ProjectiveKernel K(phase, amp, y, opts.table_tolerance);
        if (par) {
#pragma omp parallel for schedule(dynamic, 8)
            for (long long i = 0; i < sz; ++i) v[i] = K(grid.point(i));
        } else {
            for (long long i = 0; i < sz; ++i) v[i] = K(grid.point(i));
        }
    } else {
        // lattice sum over the dual lattice of the grid
        std::vector<Vec> xis;
        for (long long j = 0; j < sz; ++j) {
            const Vec xi = grid.frequency(j);
            const double l = xi(grid.n - 1);
            if (!(l > 0.0) || amp.radial(xi.norm()) == 0.0) continue;
            if ((xi.head(grid.n - 1) / l - amp.omega_center()).norm() > amp.omega_radius()) continue;
            xis.push_back(xi);
        }
        const double dxi = lattice_volume(grid);
        auto body = [&](long long i) {
            const Vec x = grid.point(i);
            Complex acc = 0.0;
            for (const Vec& xi : xis) {
                const Complex a = amp.eval_factored(x, xi);
                if (a != 0.0) acc += a * cis(phase.eval(x, xi) - y.dot(xi));
            }
            v[i] = acc * dxi;
        };
        if (par) {
#pragma omp parallel for schedule(dynamic, 8)
            for (long long i = 0; i < sz; ++i) body(i);
        } else {
            for (long long i = 0; i < sz; ++i) body(i);
        }
    }
    row.leakage = frame_fraction(row.values);
    return row;
}

KernelRow kernel_row(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y,
                     const KernelRowOptions& opts) {
    const int n = phase.dim();
    KernelMethod method = opts.method;
    if (method == KernelMethod::automatic)
        method = multiplier_path_available(phase, amp) ? KernelMethod::multiplier : KernelMethod::projective;
    KernelRowOptions o = opts;
    o.method = method;
    const bool clip = method != KernelMethod::multiplier;

    // starting margin: decay length of the radial transform across the singular set,
    // plus the spread from the angular cutoff
    const ProjectiveAmplitude* ap = &amp;
    const double lo = amp.radial_lo(), hi = amp.radial_hi();
    if (!std::isfinite(hi)) throw PreconditionError("kernel_row: radial factor must have compact support");
    const RadialProfileTransform G(n, [ap](double t) { return ap->radial(t); }, lo, hi, 1e-8);
    double gmin = std::numeric_limits<double>::infinity();
    x_grid(n, support_half_width(amp), 3, [&](const Vec& x) {
        omega_grid(amp.omega_center(), amp.omega_radius(), 9, [&](const Vec& om) {
            const Vec th = lift(om);
            gmin = std::min(gmin, phase.grad_x(x, th).norm() / th.norm());
        });
    });
    double margin = std::max(2.0 * G.cutoff() / gmin, 0.5 / (std::max(lo, 1.0) * 4 * amp.omega_scale()));
    const double w = amp.amp_x_half_width();

    for (int attempt = 0;; ++attempt) {
        const GridSpec grid = kernel_grid(phase, amp, y, margin, opts.oversample, clip);
        KernelRow row = kernel_row_on(phase, amp, y, grid, o);
        std::array<bool, 6> skip{};
        if (clip && std::isfinite(w)) {
            for (int i = 0; i < n; ++i) {
                skip[2 * i] = grid.corner(i) <= -w + 1e-12;
                skip[2 * i + 1] = grid.corner(i) + grid.L[i] >= w - 1e-12;
            }
        }
        row.leakage = frame_fraction(row.values, 0.05, skip);
        if (row.leakage <= opts.leak_tolerance || attempt >= opts.max_growth) return row;
        margin *= 1.6;
    }
}

OscResult kernel_point_oracle(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, const Vec& x,
                              double ppw) {
    const int n = phase.dim();
    const double lo = amp.radial_lo(), hi = amp.radial_hi();
    const Vec c = amp.omega_center();
    const double R = amp.omega_radius();
    OscIntegralSpec s;
    s.dim = n;
    s.lo.resize(n);
    s.hi.resize(n);
    const double ln = lo / std::sqrt(1.0 + std::pow(c.norm() + R, 2));
    for (int i = 0; i < n - 1; ++i) {
        s.lo(i) = std::min(hi * (c(i) - R), ln * (c(i) - R));
        s.hi(i) = std::max(hi * (c(i) + R), ln * (c(i) + R));
    }
    s.lo(n - 1) = ln;
    s.hi(n - 1) = hi;
    double osc = 0.0;
    omega_grid(c, R, 17, [&](const Vec& om) { osc = std::max(osc, (phase.grad_xi(x, lift(om)) - y).norm()); });
    s.oscillation_scale = 1.2 * osc + 0.1;
    s.amplitude_scale = std::min(lo * amp.omega_scale(), lo / 4);
    s.phase = [&](const Vec& xi) { return phase.eval(x, xi) - y.dot(xi); };
    s.amplitude = [&](const Vec& xi) { return amp.eval_factored(x, xi); };
    return oscillatory_quadrature(s, ppw);
}

}  // namespace fiolab
