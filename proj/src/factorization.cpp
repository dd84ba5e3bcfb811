#include "fiolab/factorization.hpp"

#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>

namespace fiolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// one term of an omega integral: f(pull) cutoff(J) varphi e^{i mu pi/4} |J|^{1/2}
struct Term {
    std::function<Complex(const Vec&)> f;
    Vec center;
    double radius = kInf;
    std::function<double(double)> cutoff;
};

// dyadic panels on [-W, W]^d, leaves at a fixed level with a GL rule each
struct OmegaTree {
    int d = 1;
    double W = 0.5;
    int levels = 0;
    double leaf_hw = 0.5;
    GaussRule rule;
    double lip = 1.0;
};

OmegaTree make_tree(int d, double W, double leaf_width, int gl, double lip) {
    OmegaTree t;
    t.d = d;
    t.W = W;
    t.levels = std::max(0, static_cast<int>(std::ceil(std::log2(2 * W / leaf_width))));
    t.leaf_hw = W / std::exp2(t.levels);
    t.rule = gauss_legendre(gl);
    t.lip = lip;
    return t;
}

// sup over the box and the omega domain of |d_omega grad_xi Phi|
double pull_lipschitz(const PhaseFunction& phase, const GridSpec& g, double W) {
    const int n = phase.dim(), d = n - 1;
    double lip = 0.0;
    Halton h(n + d, 29);
    for (int s = 0; s < 200; ++s) {
        auto u = h.next();
        Vec x(n), om(d);
        for (int i = 0; i < n; ++i) x(i) = g.corner(i) + g.L[i] * u[i];
        for (int i = 0; i < d; ++i) om(i) = W * (2 * u[n + i] - 1);
        const Mat H = phase.hess_xi(x, lift(om));
        lip = std::max(lip, Mat(H.leftCols(d)).norm());
    }
    return 1.2 * lip + 0.02;
}

struct NodeCache {
    bool active = false;
    std::vector<Vec> pull;   // grad_xi Phi(0, omega)
    std::vector<Complex> base;  // GL weight rho(|omega|/omega_max) e^{..} |J|^{1/2}
    std::vector<double> J;
    std::vector<std::vector<Complex>> amp;  // per term, base * cutoff(J)
};

void leaf_nodes(const OmegaTree& t, const Vec& c, const std::function<void(const Vec&, double)>& f) {
    const int m = static_cast<int>(t.rule.nodes.size());
    const double hw = t.leaf_hw;
    Vec om(t.d);
    if (t.d == 1) {
        for (int a = 0; a < m; ++a) {
            om(0) = c(0) + hw * t.rule.nodes[a];
            f(om, hw * t.rule.weights[a]);
        }
    } else {
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                om(0) = c(0) + hw * t.rule.nodes[a];
                om(1) = c(1) + hw * t.rule.nodes[b];
                f(om, hw * hw * t.rule.weights[a] * t.rule.weights[b]);
            }
    }
}

Vec leaf_center(const OmegaTree& t, long idx) {
    const long side = 1L << t.levels;
    Vec c(t.d);
    for (int i = 0; i < t.d; ++i, idx /= side) c(i) = -t.W + (2 * (idx % side) + 1) * t.leaf_hw;
    return c;
}

long leaf_index(const OmegaTree& t, const Vec& c) {
    const long side = 1L << t.levels;
    long idx = 0, mul = 1;
    for (int i = 0; i < t.d; ++i, mul *= side) {
        long v = std::lround((c(i) + t.W) / (2 * t.leaf_hw) - 0.5);
        v = std::clamp(v, 0L, side - 1);
        idx += v * mul;
    }
    return idx;
}

NodeCache build_cache(const AveragingSpec& spec, const OmegaTree& t, const std::vector<Term>& terms) {
    NodeCache nc;
    const PhaseFunction& phase = *spec.phase;
    if (!phase.radial_scale(Vec::Zero(phase.dim()))) return nc;
    const long side = 1L << t.levels;
    long leaves = 1;
    for (int i = 0; i < t.d; ++i) leaves *= side;
    long per = 1;
    for (int i = 0; i < t.d; ++i) per *= static_cast<long>(t.rule.nodes.size());
    if (static_cast<double>(leaves) * per > 4e6) return nc;
    nc.active = true;
    const Vec zero = Vec::Zero(phase.dim());
    nc.pull.reserve(leaves * per);
    for (long l = 0; l < leaves; ++l) {
        leaf_nodes(t, leaf_center(t, l), [&](const Vec& om, double w) {
            nc.pull.push_back(phase.grad_xi(zero, lift(om)));
            const double r = rho(om.norm() / spec.omega_max);
            if (r == 0.0) {
                nc.base.push_back(0.0);
                nc.J.push_back(0.0);
                return;
            }
            const Mat H = phase.hess_omega(zero, om);
            const double J = H.determinant();
            nc.J.push_back(J);
            nc.base.push_back(w * r * std::polar(std::sqrt(std::abs(J)), spec.damping_sign * hessian_mu(H) * kPi / 4));
        });
    }
    nc.amp.resize(terms.size());
    for (std::size_t a = 0; a < terms.size(); ++a) {
        auto& v = nc.amp[a];
        v.resize(nc.base.size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = nc.base[j] == 0.0 ? 0.0 : nc.base[j] * terms[a].cutoff(nc.J[j]);
    }
    return nc;
}

// omega integral at one x, summed over terms
void integrate_point(const AveragingSpec& spec, const std::vector<Term>& terms, const OmegaTree& t,
                     const NodeCache& nc, const Vec& x, Complex& value, double& absval, long long& nodes) {
    const PhaseFunction& phase = *spec.phase;
    const double chi = box_cutoff(x, spec.x_plateau);
    if (chi == 0.0) return;
    const int d = t.d;
    const double sq = std::sqrt(static_cast<double>(d));
    const int per = static_cast<int>(std::pow(t.rule.nodes.size(), d));
    double cs = 1.0;
    if (nc.active) {
        cs = *phase.radial_scale(x);
        if (!(cs > 0.0)) throw DomainError("apply_A: radial scale must be positive");
    }
    for (std::size_t a = 0; a < terms.size(); ++a) {
        const Term& term = terms[a];
        Complex acc = 0.0;
        double aacc = 0.0;
        std::function<void(const Vec&, double, int)> rec = [&](const Vec& c, double hw, int level) {
            if (std::isfinite(term.radius)) {
                const Vec p = phase.grad_xi(x, lift(c));
                if ((p - term.center).norm() - t.lip * hw * sq > term.radius) return;
            }
            if (level < t.levels) {
                const double h2 = 0.5 * hw;
                Vec cc(d);
                for (int s = 0; s < (1 << d); ++s) {
                    for (int i = 0; i < d; ++i) cc(i) = c(i) + ((s >> i) & 1 ? h2 : -h2);
                    rec(cc, h2, level + 1);
                }
                return;
            }
            if (nc.active) {
                const long base = leaf_index(t, c) * per;
                for (int j = 0; j < per; ++j) {
                    Complex amp;
                    if (cs == 1.0) {
                        amp = nc.amp[a][base + j];
                    } else {
                        if (nc.base[base + j] == 0.0) continue;
                        amp = nc.base[base + j] * std::pow(cs, 0.5 * d) * term.cutoff(std::pow(cs, d) * nc.J[base + j]);
                    }
                    if (amp == 0.0) continue;
                    const Complex v = amp * term.f(x + cs * nc.pull[base + j]);
                    acc += v;
                    aacc += std::abs(v);
                    ++nodes;
                }
                return;
            }
            leaf_nodes(t, c, [&](const Vec& om, double w) {
                const double r = rho(om.norm() / spec.omega_max);
                if (r == 0.0) return;
                const Mat H = phase.hess_omega(x, om);
                const double J = H.determinant();
                const double cut = term.cutoff(J);
                if (cut == 0.0) return;
                const Vec p = phase.grad_xi(x, lift(om));
                const Complex amp =
                    w * r * cut * std::polar(std::sqrt(std::abs(J)), spec.damping_sign * hessian_mu(H) * kPi / 4);
                const Complex v = amp * term.f(p);
                acc += v;
                aacc += std::abs(v);
                ++nodes;
            });
        };
        rec(Vec::Zero(d), t.W, 0);
        value += chi * acc;
        absval += chi * aacc;
    }
}

// sup over the box of |d_x grad_xi Phi|
double pull_x_lipschitz(const PhaseFunction& phase, const GridSpec& g, double W) {
    const int n = phase.dim(), d = n - 1;
    double lip = 0.0;
    Halton h(n + d, 37);
    for (int s = 0; s < 200; ++s) {
        auto u = h.next();
        Vec x(n), om(d);
        for (int i = 0; i < n; ++i) x(i) = g.corner(i) + g.L[i] * u[i];
        for (int i = 0; i < d; ++i) om(i) = W * (2 * u[n + i] - 1);
        lip = std::max(lip, phase.mixed_hess(x, lift(om)).norm());
    }
    return 1.2 * lip + 0.02;
}

// can any term reach a leaf from a ball of radius rb around x
bool block_reachable(const PhaseFunction& phase, const std::vector<Term>& terms, const OmegaTree& t, const Vec& x,
                     double rb) {
    const int d = t.d;
    const double sq = std::sqrt(static_cast<double>(d));
    for (const Term& term : terms) {
        if (!std::isfinite(term.radius)) return true;
        std::function<bool(const Vec&, double, int)> rec = [&](const Vec& c, double hw, int level) {
            const Vec p = phase.grad_xi(x, lift(c));
            if ((p - term.center).norm() - t.lip * hw * sq > term.radius + rb) return false;
            if (level == t.levels) return true;
            const double h2 = 0.5 * hw;
            Vec cc(d);
            for (int s = 0; s < (1 << d); ++s) {
                for (int i = 0; i < d; ++i) cc(i) = c(i) + ((s >> i) & 1 ? h2 : -h2);
                if (rec(cc, h2, level + 1)) return true;
            }
            return false;
        };
        if (rec(Vec::Zero(d), t.W, 0)) return true;
    }
    return false;
}

AResult integrate_terms(const AveragingSpec& spec, const std::vector<Term>& terms, int leaf_k, const GridSpec& g,
                        const AOptions& opts) {
    spec.validate();
    g.validate();
    if (g.n != spec.dim()) throw PreconditionError("apply_A: grid dimension mismatch");
    if (!(opts.leaf_scale > 0) || opts.gl_points < 2) throw PreconditionError("apply_A: bad quadrature options");
    const int n = g.n, d = n - 1;
    const double W = spec.omega_support();
    const double lip = pull_lipschitz(*spec.phase, g, W);
    const double xlip = pull_x_lipschitz(*spec.phase, g, W);
    const OmegaTree t = make_tree(d, W, opts.leaf_scale * std::exp2(-leaf_k) / lip, opts.gl_points, lip);
    const NodeCache nc = build_cache(spec, t, terms);

    AResult res;
    res.values = GriddedFunction(g);
    // blocks of B^n points, skipped when no omega leaf can reach them
    const int B = 16;
    std::array<int, 3> nb{1, 1, 1};
    long long blocks = 1;
    for (int a = 0; a < n; ++a) {
        nb[a] = (g.N[a] + B - 1) / B;
        blocks *= nb[a];
    }
    double hdiag = 0.0;
    for (int a = 0; a < n; ++a) hdiag += std::pow(0.5 * B * g.h(a), 2);
    hdiag = std::sqrt(hdiag);
    double s = 0.0;
    long long nodes = 0;
    std::exception_ptr err;
    std::mutex em;
    auto body = [&](long long b, double& sacc, long long& nacc) {
        try {
            std::array<int, 3> bi{0, 0, 0};
            long long r = b;
            for (int a = n - 1; a >= 0; --a) {
                bi[a] = static_cast<int>(r % nb[a]);
                r /= nb[a];
            }
            Vec xc(n);
            std::array<int, 3> lo{0, 0, 0}, hi{1, 1, 1};
            for (int a = 0; a < n; ++a) {
                lo[a] = bi[a] * B;
                hi[a] = std::min(g.N[a], lo[a] + B);
                xc(a) = g.corner(a) + 0.5 * (lo[a] + hi[a] - 1) * g.h(a);
            }
            if (!block_reachable(*spec.phase, terms, t, xc, xlip * hdiag)) return;
            std::array<int, 3> idx{0, 0, 0};
            for (idx[0] = lo[0]; idx[0] < hi[0]; ++idx[0])
                for (idx[1] = lo[1]; idx[1] < hi[1]; ++idx[1])
                    for (idx[2] = n == 3 ? lo[2] : 0; idx[2] < (n == 3 ? hi[2] : 1); ++idx[2]) {
                        const std::size_t i = g.flatten(idx);
                        double av = 0.0;
                        integrate_point(spec, terms, t, nc, g.point(i), res.values.values[i], av, nacc);
                        sacc += av;
                    }
        } catch (...) {
            std::lock_guard<std::mutex> l(em);
            if (!err) err = std::current_exception();
        }
    };
    if (opts.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : s, nodes)
        for (long long b = 0; b < blocks; ++b) body(b, s, nodes);
    } else {
        for (long long b = 0; b < blocks; ++b) body(b, s, nodes);
    }
    if (err) std::rethrow_exception(err);
    res.nodes = nodes;
    res.minkowski_bound = s * g.cell_volume();
    return res;
}

// spectrum multiplied by m(|xi|), back on the grid
GriddedFunction radial_filter(const Spectrum& fh, const std::function<double(double)>& m) {
    Spectrum s = fh;
    const auto sz = static_cast<long long>(s.coeffs.size());
#pragma omp parallel for schedule(static)
    for (long long j = 0; j < sz; ++j) s.coeffs[j] *= m(s.grid.frequency(j).norm());
    return inverse_fft(std::move(s));
}

// centre and radius of the region where |f| exceeds tol * max
std::pair<Vec, double> support_ball(const GriddedFunction& f, double tol) {
    const GridSpec& g = f.grid;
    const double thr = tol * f.linf();
    Vec lo = Vec::Constant(g.n, kInf), hi = Vec::Constant(g.n, -kInf);
    for (std::size_t j = 0; j < f.values.size(); ++j) {
        if (std::abs(f.values[j]) <= thr) continue;
        const Vec x = g.point(j);
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    if (!(lo(0) <= hi(0))) return {Vec::Zero(g.n), 0.0};
    double hmax = 0.0;
    for (int i = 0; i < g.n; ++i) hmax = std::max(hmax, g.h(i));
    return {0.5 * (lo + hi), 0.5 * (hi - lo).norm() + 2 * hmax};
}

Term gridded_term(std::shared_ptr<GriddedFunction> pf, std::function<double(double)> cutoff) {
    Term t;
    auto [c, r] = support_ball(*pf, 1e-12);
    t.center = c;
    t.radius = r;
    t.f = [pf](const Vec& w) { return interpolate_cubic(*pf, w); };
    t.cutoff = std::move(cutoff);
    return t;
}

}  // namespace

// --- AveragingSpec ------------------------------------------------------------------------

void AveragingSpec::validate() const {
    if (!phase) throw PreconditionError("averaging: phase required");
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("averaging: eps must lie in (0,1)");
    if (k_lo > k_hi || k_lo < 1) throw PreconditionError("averaging: bad k range");
    if (!(omega_max > 0.0 && omega_max <= 0.5)) throw PreconditionError("averaging: omega_max must lie in (0, 1/2]");
    if (!(x_plateau > 0.0)) throw PreconditionError("averaging: x_plateau must be positive");
    if (damping_sign != 1 && damping_sign != -1) throw PreconditionError("averaging: damping_sign must be +-1");
}

double AveragingSpec::weight(const Vec& x, const Vec& omega) const {
    const double r = rho(omega.norm() / omega_max);
    return r == 0.0 ? 0.0 : r * box_cutoff(x, x_plateau);
}

int hessian_mu(const Mat& H) {
    if (H.rows() == 1) return H(0, 0) > 0 ? 1 : (H(0, 0) < 0 ? -1 : 0);
    Eigen::SelfAdjointEigenSolver<Mat> es(H, Eigen::EigenvaluesOnly);
    int mu = 0;
    for (int i = 0; i < H.rows(); ++i) mu += es.eigenvalues()(i) > 0 ? 1 : (es.eigenvalues()(i) < 0 ? -1 : 0);
    return mu;
}

Complex AveragingSpec::damping_from_hessian(const Mat& H, int k) const {
    const double J = H.determinant();
    const double c = nondeg_cutoff(J, k, eps);
    if (c == 0.0) return 0.0;
    return std::polar(c * std::sqrt(std::abs(J)), damping_sign * hessian_mu(H) * kPi / 4);
}

Complex AveragingSpec::damping(const Vec& x, const Vec& omega, int k) const {
    return damping_from_hessian(phase->hess_omega(x, omega), k);
}

// --- band sources ----------------------------------------------------------------------------

double band_kernel_radius(int n, double tol) {
    if (!(tol > 0 && tol < 1)) throw PreconditionError("band_kernel_radius: tol must lie in (0,1)");
    const auto& e = eta0_inverse(n);
    const double R = e.cutoff(), dr = 0.01;
    std::vector<double> mass;
    double tot = 0.0;
    for (double r = 0.5 * dr; r < R; r += dr) {
        const double m = std::abs(e(r)) * std::pow(r, n - 1) * dr;
        mass.push_back(m);
        tot += m;
    }
    double tail = 0.0;
    for (std::size_t i = mass.size(); i-- > 0;) {
        tail += mass[i];
        if (tail > tol * tot) return std::min(R, (i + 1) * dr);
    }
    return R;
}

BandSource delta_source(int n, const Vec& z, double tail_tolerance) {
    if (z.size() != n) throw PreconditionError("delta_source: dimension mismatch");
    const double R = band_kernel_radius(n, tail_tolerance);
    const auto* e = &eta0_inverse(n);
    BandSource s;
    s.center = z;
    s.radius = [R](int k) { return R * std::exp2(-k); };
    s.eval = [e, z, R, n](int k, const Vec& w) -> Complex {
        const double r = std::exp2(k) * (w - z).norm();
        if (r >= R) return 0.0;
        return std::exp2(k * n) * (*e)(r);
    };
    return s;
}

Complex interpolate_cubic(const GriddedFunction& f, const Vec& w) {
    const GridSpec& g = f.grid;
    int i0[3] = {0, 0, 0};
    double wt[3][4];
    for (int a = 0; a < g.n; ++a) {
        const double t = (w(a) - g.corner(a)) / g.h(a);
        const int i = static_cast<int>(std::floor(t));
        if (i - 1 < 0 || i + 2 > g.N[a] - 1) throw DomainError("interpolate_cubic: pullback point outside the grid box");
        const double s = t - i, s2 = s * s, s3 = s2 * s;
        wt[a][0] = 0.5 * (-s + 2 * s2 - s3);
        wt[a][1] = 0.5 * (2 - 5 * s2 + 3 * s3);
        wt[a][2] = 0.5 * (s + 4 * s2 - 3 * s3);
        wt[a][3] = 0.5 * (-s2 + s3);
        i0[a] = i - 1;
    }
    Complex v = 0.0;
    if (g.n == 2) {
        for (int a = 0; a < 4; ++a) {
            Complex r = 0.0;
            const std::size_t row = static_cast<std::size_t>(i0[0] + a) * g.N[1];
            for (int b = 0; b < 4; ++b) r += wt[1][b] * f.values[row + i0[1] + b];
            v += wt[0][a] * r;
        }
    } else {
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                Complex r = 0.0;
                const std::size_t row = (static_cast<std::size_t>(i0[0] + a) * g.N[1] + i0[1] + b) * g.N[2];
                for (int c = 0; c < 4; ++c) r += wt[2][c] * f.values[row + i0[2] + c];
                v += wt[0][a] * wt[1][b] * r;
            }
    }
    return v;
}

// --- apply_A ---------------------------------------------------------------------------------

AResult apply_A_band(const AveragingSpec& spec, const BandSource& f, int k, const GridSpec& x_grid, const AOptions& opts) {
    Term t;
    t.f = [&f, k](const Vec& w) { return f.eval(k, w); };
    t.center = f.center;
    t.radius = f.radius ? f.radius(k) : kInf;
    const double eps = spec.eps;
    t.cutoff = [k, eps](double J) { return nondeg_cutoff(J, k, eps); };
    return integrate_terms(spec, {t}, k, x_grid, opts);
}

AResult apply_A(const AveragingSpec& spec, const BandSource& f, const GridSpec& x_grid, const AOptions& opts) {
    spec.validate();
    AResult res;
    res.values = GriddedFunction(x_grid);
    for (int k = spec.k_lo; k <= spec.k_hi; ++k) {
        AResult r = apply_A_band(spec, f, k, x_grid, opts);
        for (std::size_t i = 0; i < r.values.values.size(); ++i) res.values.values[i] += r.values.values[i];
        res.minkowski_bound += r.minkowski_bound;
        res.nodes += r.nodes;
    }
    return res;
}

AResult apply_A(const AveragingSpec& spec, const GriddedFunction& f, const GridSpec& x_grid, const AOptions& opts) {
    spec.validate();
    if (f.grid.n != spec.dim()) throw PreconditionError("apply_A: f has the wrong dimension");
    const Spectrum fh = forward_fft(f);
    AResult res;
    res.values = GriddedFunction(x_grid);
    const double eps = spec.eps;
    for (int k = spec.k_lo; k <= spec.k_hi; ++k) {
        if (std::exp2(k - 1) >= f.grid.min_nyquist()) throw PreconditionError("apply_A: band k exceeds the grid Nyquist");
        auto pk = std::make_shared<GriddedFunction>(radial_filter(fh, [k](double r) { return eta_k(k, r); }));
        if (pk->linf() == 0.0) continue;
        Term t = gridded_term(pk, [k, eps](double J) { return nondeg_cutoff(J, k, eps); });
        AResult r = integrate_terms(spec, {t}, k, x_grid, opts);
        for (std::size_t i = 0; i < r.values.values.size(); ++i) res.values.values[i] += r.values.values[i];
        res.minkowski_bound += r.minkowski_bound;
        res.nodes += r.nodes;
    }
    return res;
}

SummationByPartsReport verify_A_summation_by_parts(const AveragingSpec& spec, const GriddedFunction& f, int k_max,
                                                   const GridSpec& x_grid, const AOptions& opts) {
    spec.validate();
    const int a = spec.k_lo, b = k_max;
    if (b <= a) throw PreconditionError("summation by parts: k_max must exceed k_min");
    if (std::exp2(b) >= f.grid.min_nyquist()) throw PreconditionError("summation by parts: k_max exceeds the grid Nyquist");
    const Spectrum fh = forward_fft(f);
    double peak = 0.0;
    for (const auto& c : fh.coeffs) peak = std::max(peak, std::abs(c));
    const double lo = std::exp2(a), hi = std::exp2(b - 1);
    for (std::size_t j = 0; j < fh.coeffs.size(); ++j) {
        const double r = fh.grid.frequency(j).norm();
        if ((r < lo || r > hi) && std::abs(fh.coeffs[j]) > 1e-10 * peak)
            throw PreconditionError("summation by parts: f has energy outside 2^k_min <= |xi| <= 2^(k_max-1)");
    }
    const double eps = spec.eps;
    auto c = [eps](int k) { return [k, eps](double J) { return nondeg_cutoff(J, k, eps); }; };
    std::vector<Term> direct, parts;
    for (int k = a; k <= b; ++k) {
        auto pk = std::make_shared<GriddedFunction>(radial_filter(fh, [k](double r) { return eta_k(k, r); }));
        direct.push_back(gridded_term(pk, c(k)));
    }
    auto low = [&](int k) {
        return std::make_shared<GriddedFunction>(radial_filter(fh, [k](double r) { return phi_k(k, r); }));
    };
    parts.push_back(gridded_term(low(b), c(b)));
    parts.push_back(gridded_term(low(a - 1), [a, eps](double J) { return -nondeg_cutoff(J, a, eps); }));
    for (int k = a; k < b; ++k)
        parts.push_back(gridded_term(low(k), [k, eps](double J) {
            return nondeg_cutoff(J, k, eps) - nondeg_cutoff(J, k + 1, eps);
        }));
    // the same omega nodes for both forms
    AResult d = integrate_terms(spec, direct, b, x_grid, opts);
    AResult p = integrate_terms(spec, parts, b, x_grid, opts);
    SummationByPartsReport rep;
    rep.k_min = a;
    rep.k_max = b;
    rep.direct_l1 = d.values.l1();
    rep.parts_l1 = p.values.l1();
    double diff = 0.0;
    for (std::size_t i = 0; i < d.values.values.size(); ++i) {
        const double e = std::abs(d.values.values[i] - p.values.values[i]);
        rep.max_abs_diff = std::max(rep.max_abs_diff, e);
        diff += e;
    }
    diff *= x_grid.cell_volume();
    rep.relative_l1_diff = rep.direct_l1 > 0 ? diff / rep.direct_l1 : diff;
    return rep;
}

GriddedFunction band_limited_input(const GridSpec& g, int k_min, int k_max, std::uint64_t seed, double radius) {
    if (k_max < k_min + 2) throw PreconditionError("band_limited_input: need k_max >= k_min + 2");
    if (std::exp2(k_max) > g.min_nyquist()) throw PreconditionError("band_limited_input: band exceeds the grid Nyquist");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = g.n;
    struct Packet {
        Vec c, xi;
        Complex a;
    };
    std::vector<Packet> ps;
    const double flo = std::exp2(k_min) * 1.3, fhi = std::exp2(k_max - 1) / 1.3;
    for (int j = 0; j < 6; ++j) {
        Packet p;
        p.c = Vec(n);
        for (int i = 0; i < n; ++i) p.c(i) = radius * 0.6 * (2 * u(rng) - 1);
        Vec dir(n);
        for (int i = 0; i < n; ++i) dir(i) = 2 * u(rng) - 1;
        dir.normalize();
        p.xi = dir * (flo * std::pow(fhi / flo, u(rng)));
        p.a = std::polar(0.5 + u(rng), kTwoPi * u(rng));
        ps.push_back(p);
    }
    const double s = 0.12 * radius / 0.4;
    auto f = GriddedFunction::sample(g, [&](const Vec& x) {
        Complex v = 0.0;
        for (const auto& p : ps) v += p.a * std::exp(-(x - p.c).squaredNorm() / (2 * s * s)) * cis(p.xi.dot(x));
        return v;
    });
    return radial_filter(forward_fft(f), [k_min, k_max](double r) { return phi_k(k_max - 2, r) * (1.0 - phi_k(k_min, r)); });
}

// --- pseudodifferential factor --------------------------------------------------------------

PseudoSymbol::PseudoSymbol(PhasePtr phase, std::shared_ptr<const SymbolFunction> a, AveragingSpec weight,
                           double support_omega)
    : phase_(std::move(phase)), a_(std::move(a)), w_(std::move(weight)), support_omega_(support_omega) {
    if (!phase_ || !a_) throw PreconditionError("pseudo symbol: phase and symbol required");
    if (phase_->dim() != a_->dim()) throw PreconditionError("pseudo symbol: dimension mismatch");
    if (!(support_omega_ > 0 && support_omega_ < 1)) throw PreconditionError("pseudo symbol: support_omega in (0,1)");
    if (!w_.phase) w_.phase = phase_;
    w_.validate();
    pa_ = dynamic_cast<const ProjectiveAmplitude*>(a_.get());
    separable_ = phase_->x_independent_gradient() && pa_ && pa_->x_separable() &&
                 a_->x_half_width() <= w_.x_plateau;
}

Complex PseudoSymbol::quotient(const Vec& x, const Vec& xi) const {
    const Complex av = a_->eval(x, xi);
    if (av == 0.0) return 0.0;
    const int d = dim() - 1;
    const double lam = xi(d);
    const Vec om = xi.head(d) / lam;
    const double vp = w_.weight(x, om);
    if (!(vp > 1e-9)) throw PreconditionError("pseudo symbol: varphi vanishes on the support of a");
    return std::pow(lam, 0.5 * d) * av / vp;
}

bool PseudoSymbol::in_support_image(const Vec& x, const Vec& zeta) const {
    const int n = dim();
    if (zeta.norm() == 0.0) return false;
    const Vec v0 = phase_->grad_x(x, lift(Vec::Zero(n - 1))).normalized();
    const Vec u = zeta.normalized();
    if (n == 2) {
        auto rel = [&](const Vec& v) { return std::atan2(v0(0) * v(1) - v0(1) * v(0), v0.dot(v)); };
        Vec om(1);
        om(0) = -support_omega_;
        const double a = rel(phase_->grad_x(x, lift(om)));
        om(0) = support_omega_;
        const double b = rel(phase_->grad_x(x, lift(om)));
        const double t = rel(u);
        return t >= std::min(a, b) && t <= std::max(a, b);
    }
    // gnomonic chart around v0, boundary circle as a polygon
    if (u.dot(v0) <= 0.0) return false;
    Vec e1 = Vec::Zero(3);
    e1(std::abs(v0(0)) < 0.9 ? 0 : 1) = 1.0;
    e1 = (e1 - e1.dot(v0) * v0).normalized();
    Vec e2(3);
    e2 << v0(1) * e1(2) - v0(2) * e1(1), v0(2) * e1(0) - v0(0) * e1(2), v0(0) * e1(1) - v0(1) * e1(0);
    auto chart = [&](const Vec& v) { return std::pair<double, double>{v.dot(e1) / v.dot(v0), v.dot(e2) / v.dot(v0)}; };
    const auto [px, py] = chart(u);
    const int m = 64;
    std::vector<std::pair<double, double>> poly;
    for (int j = 0; j < m; ++j) {
        Vec om(2);
        om << support_omega_ * std::cos(kTwoPi * j / m), support_omega_ * std::sin(kTwoPi * j / m);
        const Vec v = phase_->grad_x(x, lift(om));
        if (v.dot(v0) <= 0.0) return false;
        poly.push_back(chart(v));
    }
    bool inside = false;
    for (int i = 0, j = m - 1; i < m; j = i++) {
        const auto [xi, yi] = poly[i];
        const auto [xj, yj] = poly[j];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

Complex PseudoSymbol::eval(const Vec& x, const Vec& zeta) const {
    if (separable_) {
        const double sp = spatial(x);
        return sp == 0.0 ? 0.0 : sp * sigma(zeta);
    }
    if (zeta.norm() == 0.0) return 0.0;
    Vec xi;
    try {
        xi = invert_grad_x(*phase_, x, zeta, ConeSpec{1e-6, 1.0}).cartesian();
    } catch (const InversionFailure&) {
        if (in_support_image(x, zeta))
            throw ConsistencyError("pseudo symbol: grad_x Phi inversion failed inside the support image");
        return 0.0;
    } catch (const DomainError&) {
        return 0.0;
    }
    const int d = dim() - 1;
    if ((xi.head(d) / xi(d)).norm() > support_omega_) return 0.0;
    return quotient(x, xi);
}

double PseudoSymbol::spatial(const Vec& x) const {
    if (!separable_) throw PreconditionError("pseudo symbol: not x-separable");
    return pa_->spatial(x);
}

Complex PseudoSymbol::sigma(const Vec& zeta) const {
    if (!separable_) throw PreconditionError("pseudo symbol: not x-separable");
    const int n = dim(), d = n - 1;
    if (!(zeta(d) > 0.0)) return 0.0;
    const Vec zero = Vec::Zero(n);
    Vec xi;
    try {
        xi = invert_grad_x(*phase_, zero, zeta, ConeSpec{1e-6, 1.0}).cartesian();
    } catch (const InversionFailure&) {
        if (in_support_image(zero, zeta))
            throw ConsistencyError("pseudo symbol: grad_x Phi inversion failed inside the support image");
        return 0.0;
    } catch (const DomainError&) {
        return 0.0;
    }
    const double lam = xi(d);
    const Vec om = xi.head(d) / lam;
    if (om.norm() > support_omega_) return 0.0;
    const double g = pa_->radial(xi.norm());
    if (g == 0.0) return 0.0;
    const double r = rho(om.norm() / w_.omega_max);
    if (!(r > 1e-9)) throw PreconditionError("pseudo symbol: varphi vanishes on the support of a");
    return std::pow(lam, 0.5 * d) * pa_->angular_only(om) * g / r;
}

Complex build_s(const PhasePtr& phase, const std::shared_ptr<const SymbolFunction>& a, const AveragingSpec& varphi,
                const Vec& x, const Vec& zeta, double support_omega) {
    return PseudoSymbol(phase, a, varphi, support_omega).eval(x, zeta);
}

GriddedFunction apply_S(const PseudoSymbol& s, const GriddedFunction& g, Exec exec) {
    if (!s.x_separable()) return apply_S_direct(s, g, exec);
    Spectrum sp = forward_fft(g);
    const auto sz = static_cast<long long>(sp.coeffs.size());
    auto mul = [&](long long j) {
        if (sp.coeffs[j] != 0.0) sp.coeffs[j] *= s.sigma(sp.grid.frequency(j));
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1024)
        for (long long j = 0; j < sz; ++j) mul(j);
    } else {
        for (long long j = 0; j < sz; ++j) mul(j);
    }
    GriddedFunction out = inverse_fft(std::move(sp));
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= s.spatial(out.grid.point(i));
    return out;
}

GriddedFunction apply_S_direct(const PseudoSymbol& s, const GriddedFunction& g, Exec exec, double max_work) {
    const GridSpec& G = g.grid;
    if (G.n != s.dim()) throw PreconditionError("apply_S: dimension mismatch");
    const Spectrum sp = forward_fft(g);
    double peak = 0.0;
    for (const auto& c : sp.coeffs) peak = std::max(peak, std::abs(c));
    std::vector<std::size_t> live;
    for (std::size_t j = 0; j < sp.coeffs.size(); ++j)
        if (std::abs(sp.coeffs[j]) > 1e-17 * peak) live.push_back(j);
    if (static_cast<double>(live.size()) * G.size() > max_work) throw ResourceError("apply_S: direct sum exceeds the work budget");
    double vol = 1.0;
    for (int a = 0; a < G.n; ++a) vol *= G.L[a];
    GriddedFunction out(G);
    const auto sz = static_cast<long long>(G.size());
    auto body = [&](long long i) {
        const Vec x = G.point(i);
        Complex acc = 0.0;
        for (std::size_t j : live) {
            const Vec z = G.frequency(j);
            const Complex sv = s.eval(x, z);
            if (sv != 0.0) acc += sv * sp.coeffs[j] * cis(x.dot(z));
        }
        out.values[i] = acc / vol;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (long long i = 0; i < sz; ++i) body(i);
    } else {
        for (long long i = 0; i < sz; ++i) body(i);
    }
    return out;
}

// --- E ---------------------------------------------------------------------------------------

namespace {

// box of {x : grad_xi Phi(x, omega) = z} over |omega| <= R
std::pair<Vec, Vec> arc_box(const PhaseFunction& phase, const Vec& z, double R) {
    const int n = phase.dim(), d = n - 1;
    Vec lo = Vec::Constant(n, kInf), hi = Vec::Constant(n, -kInf);
    const Vec zero = Vec::Zero(n);
    const int m = d == 1 ? 65 : 17;
    const int total = d == 1 ? m : m * m;
    for (int a = 0; a < total; ++a) {
        Vec om(d);
        int r = a;
        for (int i = 0; i < d; ++i, r /= m) om(i) = -R + 2 * R * (r % m) / (m - 1);
        if (om.norm() > R * (1 + 1e-12)) continue;
        const Vec th = lift(om);
        Vec x = z - phase.grad_xi(zero, th);
        bool ok = false;
        for (int it = 0; it < 40; ++it) {
            const Vec F = phase.grad_xi(x, th) - z;
            if (F.norm() < 1e-12) {
                ok = true;
                break;
            }
            x -= phase.mixed_hess(x, th).transpose().partialPivLu().solve(F);
            if (!x.allFinite() || x.norm() > 1e3) break;
        }
        if (!ok) continue;
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    if (!(lo(0) <= hi(0))) throw DomainError("apply_E: no point of the averaging arc found");
    return {lo, hi};
}

// per-axis sup of |grad_x Phi(x, theta)| / |theta| over the box and |omega| <= R
Vec axis_extent(const PhaseFunction& phase, const Vec& lo, const Vec& hi, double R) {
    const int n = phase.dim(), d = n - 1;
    Halton h(n + d, 31);
    Vec e = Vec::Zero(n);
    auto add = [&](const Vec& x, const Vec& om) {
        const Vec th = lift(om);
        e = e.cwiseMax((phase.grad_x(x, th) / th.norm()).cwiseAbs());
    };
    for (int s = 0; s < 400; ++s) {
        auto u = h.next();
        Vec x(n), om(d);
        for (int i = 0; i < n; ++i) x(i) = lo(i) + (hi(i) - lo(i)) * u[i];
        // the rim carries the largest tilt
        for (int i = 0; i < d; ++i) om(i) = 2 * u[n + i] - 1;
        if (om.norm() > 0) om *= R / om.norm();
        add(x, om);
        add(x, -om);
    }
    return e;
}

// index of the coarse coefficient j inside the fine lattice, -1 for the coarse Nyquist row
long long embed_index(const GridSpec& coarse, const GridSpec& fine, std::size_t j) {
    const auto idx = coarse.unflatten(j);
    std::array<int, 3> out{0, 0, 0};
    for (int a = 0; a < coarse.n; ++a) {
        int s = idx[a] < coarse.N[a] / 2 ? idx[a] : idx[a] - coarse.N[a];
        if (s == -coarse.N[a] / 2 || s >= fine.N[a] / 2 || s <= -fine.N[a] / 2) return -1;
        out[a] = s >= 0 ? s : s + fine.N[a];
    }
    return static_cast<long long>(fine.flatten(out));
}

// flat indices of the lattice frequencies with |eta_i| <= ext_i
std::vector<std::size_t> frequency_box(const GridSpec& g, const Vec& ext) {
    std::array<std::vector<int>, 3> ax;
    for (int a = 0; a < 3; ++a) {
        if (a >= g.n) {
            ax[a] = {0};
            continue;
        }
        const int m = std::min(static_cast<int>(std::floor(ext(a) * g.L[a])), g.N[a] / 2 - 1);
        for (int s = -m; s <= m; ++s) ax[a].push_back(s >= 0 ? s : s + g.N[a]);
    }
    std::vector<std::size_t> out;
    out.reserve(ax[0].size() * ax[1].size() * ax[2].size());
    for (int i : ax[0])
        for (int j : ax[1])
            for (int k : ax[2]) out.push_back(g.flatten({i, j, k}));
    return out;
}

// min and max of |grad_x Phi(x, theta)| / |theta| over the box and |omega| <= R
std::pair<double, double> norm_range(const PhaseFunction& phase, const Vec& lo, const Vec& hi, double R) {
    const int n = phase.dim(), d = n - 1;
    Halton h(n + d, 41);
    double a = kInf, b = 0.0;
    for (int s = 0; s < 400; ++s) {
        auto u = h.next();
        Vec x(n), om(d);
        for (int i = 0; i < n; ++i) x(i) = lo(i) + (hi(i) - lo(i)) * u[i];
        for (int i = 0; i < d; ++i) om(i) = R * (2 * u[n + i] - 1);
        const Vec th = lift(om);
        const double v = phase.grad_x(x, th).norm() / th.norm();
        a = std::min(a, v);
        b = std::max(b, v);
    }
    return {a, b};
}

}  // namespace

EResult apply_E(const OperatorSpec& op, const AveragingSpec& A, const Vec& z, const EOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    op.validate();
    A.validate();
    if (op.variant != OperatorVariant::nondeg) throw PreconditionError("apply_E: operator variant must be nondeg");
    if (A.phase->name() != op.phase->name() || A.dim() != op.dim())
        throw PreconditionError("apply_E: averaging and operator phases differ");
    if (A.eps != op.eps) throw PreconditionError("apply_E: averaging and operator eps differ");
    const PhaseFunction& phase = *op.phase;
    const int n = phase.dim();
    if (z.size() != n) throw PreconditionError("apply_E: z has the wrong dimension");
    PseudoSymbol s(op.phase, op.symbol, A, op.symbol->omega_radius());
    if (!s.x_separable()) throw PreconditionError("apply_E: needs an x-separable s (x-independent grad_x Phi)");
    const int K = op.k_hi;

    const auto [alo, ahi] = arc_box(phase, z, A.omega_support());
    // T and sigma live on the symbol cone; A_k delta_z needs the wider averaging cone plus its tails
    const Vec ext_s = axis_extent(phase, alo.array() - 1.0, ahi.array() + 1.0, op.symbol->omega_radius());
    const Vec ext_a = axis_extent(phase, alo.array() - 1.0, ahi.array() + 1.0, A.omega_support()).array() + 0.1;
    const auto [nlo, nhi] = norm_range(phase, alo.array() - 1.0, ahi.array() + 1.0, op.symbol->omega_radius());
    const BandSource src = delta_source(n, z, opts.tail_tolerance);

    EResult best;
    double margin = opts.margin;
    for (int attempt = 0; attempt <= opts.max_growth; ++attempt, margin *= 1.5) {
        std::array<double, 3> L{1, 1, 1}, c{0, 0, 0};
        auto grid_for = [&](int k, const Vec& ext) {
            std::array<int, 3> Nk{1, 1, 1};
            for (int i = 0; i < n; ++i)
                Nk[i] = fft_friendly(static_cast<int>(std::ceil(2 * opts.oversample * std::exp2(k + 1) * ext(i) * L[i])));
            return GridSpec::box(n, Nk, L, c);
        };
        for (int i = 0; i < n; ++i) {
            L[i] = ahi(i) - alo(i) + 2 * margin;
            c[i] = 0.5 * (ahi(i) + alo(i));
        }
        const GridSpec big = grid_for(K, ext_s);
        if (static_cast<double>(big.size()) > opts.max_points) throw ResourceError("apply_E: grid exceeds the point budget");
        const auto bsz = static_cast<long long>(big.size());
        std::vector<Complex> ST(bsz, 0.0), SSA(bsz, 0.0), S2;

        EResult res;
        res.z = z;
        res.grid = big;
        // partial sums up to k live on the smaller grid for band k
        auto assemble = [&](int kk) {
            const bool last = kk == K;
            const GridSpec sub = last ? big : grid_for(kk, ext_s);
            const auto ssz = static_cast<long long>(sub.size());
            std::vector<Complex> e(ssz, 0.0), e2;
            if (!S2.empty()) e2.assign(ssz, 0.0);
            for (long long j = 0; j < ssz; ++j) {
                const long long J = last ? j : embed_index(sub, big, j);
                if (J < 0) continue;
                e[j] = ST[J] - SSA[J];
                if (!S2.empty()) e2[j] = S2[J];
            }
            fft_inverse_inplace(sub, e);
            if (last) res.leakage = frame_fraction(GriddedFunction(sub, e));
            for (long long i = 0; i < ssz; ++i) e[i] *= s.spatial(sub.point(i));
            if (!S2.empty()) {
                fft_inverse_inplace(sub, e2);
                for (long long i = 0; i < ssz; ++i) e[i] += e2[i];
            }
            GriddedFunction E(sub, std::move(e));
            const double l1 = E.l1();
            if (last) res.values = std::move(E);
            return l1;
        };

        for (int k = op.k_lo; k <= K; ++k) {
            const PiecePtr piece = op.piece(k);
            const Vec ext = 1.02 * std::exp2(k + 1) * ext_s;
            // T_nondeg part
            if (multiplier_path_available(phase, *piece)) {
                const auto box = frequency_box(big, ext);
                const double rlo = 0.98 * std::exp2(k - 1) * nlo, rhi = 1.02 * std::exp2(k + 1) * nhi;
                const auto m = static_cast<long long>(box.size());
#pragma omp parallel for schedule(dynamic, 1024)
                for (long long i = 0; i < m; ++i) {
                    const std::size_t j = box[i];
                    const Vec eta = big.frequency(j);
                    const double r = eta.norm();
                    if (r < rlo || r > rhi) continue;
                    ST[j] += kernel_multiplier(phase, *piece, z, eta);
                }
            } else {
                const GridSpec gk = grid_for(k, ext_s);
                KernelRowOptions ko;
                ko.method = KernelMethod::projective;
                KernelRow row = kernel_row_on(phase, *piece, z, gk, ko);
                fft_forward_inplace(gk, row.values.values);
                if (S2.empty()) S2.assign(bsz, 0.0);
                for (std::size_t j = 0; j < gk.size(); ++j) {
                    const long long J = embed_index(gk, big, j);
                    if (J >= 0) S2[J] += row.values.values[j];
                }
            }
            // S A_k delta_z
            const GridSpec gk = grid_for(k, ext_a);
            AResult ak = apply_A_band(A, src, k, gk, opts.a);
            fft_forward_inplace(gk, ak.values.values);
            const auto& cv = ak.values.values;
            double peak = 0.0;
            for (const auto& v : cv) peak = std::max(peak, std::abs(v));
            // sigma vanishes off the symbol cone, so only that part of the spectrum is read
            const auto box = frequency_box(gk, ext);
            const auto gsz = static_cast<long long>(box.size());
#pragma omp parallel for schedule(dynamic, 1024)
            for (long long i = 0; i < gsz; ++i) {
                const std::size_t j = box[i];
                if (!(std::abs(cv[j]) > 1e-12 * peak)) continue;
                const long long J = embed_index(gk, big, j);
                if (J < 0) continue;
                const Vec eta = gk.frequency(j);
                if (!s.in_support_image(Vec::Zero(n), eta)) continue;
                SSA[J] += s.sigma(eta) * cv[j];
            }
            res.partial.push_back({k, assemble(k)});
        }
        res.l1 = res.partial.back().second;
        {
            std::vector<Complex> t = ST;
            fft_inverse_inplace(big, t);
            for (long long i = 0; i < bsz; ++i) t[i] *= s.spatial(big.point(i));
            if (!S2.empty()) {
                std::vector<Complex> e2 = S2;
                fft_inverse_inplace(big, e2);
                for (long long i = 0; i < bsz; ++i) t[i] += e2[i];
            }
            res.t_l1 = GriddedFunction(big, std::move(t)).l1();
            std::vector<Complex> u = SSA;
            fft_inverse_inplace(big, u);
            for (long long i = 0; i < bsz; ++i) u[i] *= s.spatial(big.point(i));
            res.sa_l1 = GriddedFunction(big, std::move(u)).l1();
        }
        best = std::move(res);
        if (best.leakage <= opts.leak_tolerance) break;
    }
    best.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return best;
}

// --- W diagnostics ---------------------------------------------------------------------------

namespace {

struct WGeometry {
    int n, d;
    double lam;
    Vec om_p, zeta0;
    double phi_x;
};

WGeometry w_geometry(const PhaseFunction& phase, const Vec& x, int k, const Vec& xi_prime) {
    WGeometry g;
    g.n = phase.dim();
    g.d = g.n - 1;
    if (xi_prime.size() != g.n || x.size() != g.n) throw PreconditionError("W: dimension mismatch");
    const double r = xi_prime.norm();
    if (r < std::exp2(k - 1) || r > std::exp2(k + 1)) throw PreconditionError("W: |xi'| must be comparable to 2^k");
    g.lam = xi_prime(g.d);
    if (!(g.lam > 0)) throw PreconditionError("W: xi' must lie in the upper cone");
    g.om_p = xi_prime.head(g.d) / g.lam;
    g.zeta0 = phase.grad_x(x, xi_prime);
    g.phi_x = phase.eval(x, xi_prime);
    return g;
}

// int e^{2 pi i (xi'.grad_xi Phi(y, omega) - Phi(x, xi'))} amp(omega) rho(|omega - omega'|/r) domega,
// amp(omega) = varphi(y, omega) D_k(y, omega) (without chi~(y) when drop_spatial is set)
Complex omega_window_integral(const AveragingSpec& A, const Vec& y, int k, const Vec& xi_prime, const WGeometry& g,
                              double r, int gl, bool drop_spatial) {
    const PhaseFunction& phase = *A.phase;
    const int d = g.d;
    const double hmax = 1.5 * Mat(phase.hess_omega(y, g.om_p)).cwiseAbs().maxCoeff() + 0.1;
    const int panels = std::max(2, static_cast<int>(std::ceil(4 * g.lam * r * r * hmax)) + 1);
    const auto& rule = gauss_legendre(gl);
    const double lo = -2 * r, h = 4 * r / panels;
    std::vector<double> t, w;
    for (int p = 0; p < panels; ++p)
        for (std::size_t a = 0; a < rule.nodes.size(); ++a) {
            t.push_back(lo + h * (p + 0.5 * (rule.nodes[a] + 1)));
            w.push_back(0.5 * h * rule.weights[a]);
        }
    const double chi = drop_spatial ? 1.0 : box_cutoff(y, A.x_plateau);
    if (chi == 0.0) return 0.0;
    Complex acc = 0.0;
    auto node = [&](const Vec& dv, double wt) {
        const double win = rho(dv.norm() / r);
        if (win == 0.0) return;
        const Vec om = g.om_p + dv;
        const double rw = rho(om.norm() / A.omega_max);
        if (rw == 0.0) return;
        const Complex D = A.damping(y, om, k);
        if (D == 0.0) return;
        const double ph = xi_prime.dot(phase.grad_xi(y, lift(om))) - g.phi_x;
        acc += wt * win * rw * D * cis(ph);
    };
    Vec dv(d);
    if (d == 1) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            dv(0) = t[i];
            node(dv, w[i]);
        }
    } else {
        for (std::size_t i = 0; i < t.size(); ++i)
            for (std::size_t j = 0; j < t.size(); ++j) {
                dv(0) = t[i];
                dv(1) = t[j];
                node(dv, w[i] * w[j]);
            }
    }
    return chi * acc;
}

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

Complex W_nested(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& xi_prime,
                 const WGeometry& g, double wf, const WOptions& opts, long long& points) {
    const PhaseFunction& phase = *A.phase;
    const int n = g.n;
    const double eps = A.eps;
    const double r_om = wf * std::exp2(eps * k - 0.5 * k), r_y = r_om, r_z = wf * std::exp2((0.5 + 2 * eps) * k);
    const double Py = 4 * r_y + 16.0 / r_z;
    const int N = fft_friendly(static_cast<int>(std::ceil(4 * r_z * Py)));
    const double dz = 1.0 / Py, dy = Py / N;
    double total = 1.0;
    for (int i = 0; i < n; ++i) total *= N;
    const bool ti = phase.translation_invariant();
    const double omega_nodes = ti ? 0.0 : std::pow(opts.gl_points * (4 * g.lam * r_om * r_om + 3), g.d);
    if (total * (1.0 + omega_nodes * std::pow(4 * r_y / (Py), n)) > opts.max_points)
        throw ResourceError("W: nested quadrature budget exceeded");
    const auto sz = static_cast<long long>(total);
    points += sz;
    std::vector<Complex> data(sz);
    auto idx_of = [&](long long f, int* idx) {
        for (int i = n - 1; i >= 0; --i) {
            idx[i] = static_cast<int>(f % N);
            f /= N;
        }
    };
    const bool par = opts.exec == Exec::parallel;
    auto fill = [&](long long f) {
        int idx[3];
        idx_of(f, idx);
        Vec zeta(n);
        int parity = 0;
        for (int i = 0; i < n; ++i) {
            zeta(i) = g.zeta0(i) + (idx[i] - N / 2) * dz;
            parity += idx[i];
        }
        const double win = rho((zeta - g.zeta0).norm() / r_z);
        Complex v = win == 0.0 ? Complex(0.0) : s.eval(x, zeta) * win;
        data[f] = (parity & 1) ? -v : v;
    };
    if (par) {
#pragma omp parallel for schedule(dynamic, 1024)
        for (long long f = 0; f < sz; ++f) fill(f);
    } else {
        for (long long f = 0; f < sz; ++f) fill(f);
    }
    {
        int dims[3] = {N, N, N};
        auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
        fftw_plan p;
        {
            std::lock_guard<std::mutex> l(fftw_mutex());
            p = fftw_plan_dft(n, dims, ptr, ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
        }
        fftw_execute(p);
        std::lock_guard<std::mutex> l(fftw_mutex());
        fftw_destroy_plan(p);
    }
    const double sgnN = (N / 2) % 2 == 0 ? 1.0 : -1.0;
    const double dzn = std::pow(dz, n), dyn = std::pow(dy, n);
    Complex gamma = 0.0;
    if (ti) gamma = omega_window_integral(A, x, k, xi_prime, g, r_om, opts.gl_points, true);
    std::vector<Complex> part(sz, 0.0);
    auto sum = [&](long long f) {
        int idx[3];
        idx_of(f, idx);
        Vec u(n);
        int parity = 0;
        for (int i = 0; i < n; ++i) {
            u(i) = (idx[i] - N / 2) * dy;
            parity += idx[i];
        }
        const double wy = rho(u.norm() / r_y);
        if (wy == 0.0) return;
        double fac = std::pow(sgnN, n) * ((parity & 1) ? -1.0 : 1.0);
        const Complex I = data[f] * fac * dzn * cis(u.dot(g.zeta0));
        const Vec y = x - u;
        Complex G;
        if (ti) {
            G = box_cutoff(y, A.x_plateau) * cis(-xi_prime.dot(u)) * gamma;
        } else {
            G = omega_window_integral(A, y, k, xi_prime, g, r_om, opts.gl_points, false);
        }
        part[f] = I * wy * G * dyn;
    };
    if (par) {
#pragma omp parallel for schedule(dynamic, 256)
        for (long long f = 0; f < sz; ++f) sum(f);
    } else {
        for (long long f = 0; f < sz; ++f) sum(f);
    }
    Complex W = 0.0;
    for (const auto& v : part) W += v;
    return W;
}

}  // namespace

Complex W_leading(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& xi_prime) {
    const WGeometry g = w_geometry(*A.phase, x, k, xi_prime);
    const double J = curvature_J(*A.phase, x, g.om_p);
    return s.eval(x, g.zeta0) * std::pow(g.lam, -0.5 * g.d) * A.weight(x, g.om_p) * nondeg_cutoff(J, k, A.eps);
}

Complex W_collapsed(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& xi_prime,
                    double window, int gl_points) {
    const WGeometry g = w_geometry(*A.phase, x, k, xi_prime);
    const double r = window * std::exp2(A.eps * k - 0.5 * k);
    return s.eval(x, g.zeta0) * omega_window_integral(A, x, k, xi_prime, g, r, gl_points, false);
}

WDiagnostic compute_W_pair(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& z,
                           const Vec& xi_prime, const WOptions& opts) {
    A.validate();
    if (!(opts.window > 0)) throw PreconditionError("W: window must be positive");
    const WGeometry g = w_geometry(*A.phase, x, k, xi_prime);
    WDiagnostic w;
    w.x = x;
    w.z = z;
    w.xi_prime = xi_prime;
    w.k = k;
    w.r_omega = opts.window * std::exp2(A.eps * k - 0.5 * k);
    w.r_y = w.r_omega;
    w.r_zeta = opts.window * std::exp2((0.5 + 2 * A.eps) * k);
    w.W0 = W_leading(A, s, x, k, xi_prime);
    w.W_collapsed = W_collapsed(A, s, x, k, xi_prime, opts.window, opts.gl_points);
    w.W = W_nested(A, s, x, k, xi_prime, g, opts.window, opts, w.points);
    if (opts.estimate_tail) {
        const Complex w75 = W_nested(A, s, x, k, xi_prime, g, 0.75 * opts.window, opts, w.points);
        w.tail_estimate = std::abs(w.W - w75);
    }
    const double norm = std::exp2(0.5 * g.d * k);
    w.normalized_diff = std::abs(w.W - w.W0) * norm;
    w.normalized_collapsed_diff = std::abs(w.W_collapsed - w.W0) * norm;
    return w;
}

// --- identities --------------------------------------------------------------------------------

StationarityReport verify_stationarity_identities(const PhaseFunction& phase, int samples, std::uint64_t seed,
                                                  const ConeSpec& cone) {
    if (samples < 100) throw PreconditionError("stationarity identities: need at least 100 samples");
    cone.validate();
    const int n = phase.dim(), d = n - 1;
    StationarityReport rep;
    rep.phase = phase.name();
    rep.samples = samples;
    Halton h1(2 * n + 1, seed), h2(d, seed + 1);
    // grad_omega of xi'.grad_xi Phi(x, (omega,1))
    auto G = [&](const Vec& x, const Vec& xp, const Vec& om) -> Vec {
        return (phase.hess_xi(x, lift(om)) * xp).head(d);
    };
    for (int s = 0; s < samples; ++s) {
        const ConeSample c = sample_cone(h1.next(), n, cone.omega_max, cone.lambda_min, 4096.0);
        auto u = h2.next();
        Vec om(d);
        if (d == 1) {
            om(0) = cone.omega_max * (2 * u[0] - 1);
        } else {
            const double r = cone.omega_max * std::sqrt(u[0]), a = kTwoPi * u[1];
            om << r * std::cos(a), r * std::sin(a);
        }
        const Vec xp = c.xi();
        const double lam = c.lambda;
        const Mat H = phase.hess_omega(c.x, om);
        const Vec rhs = lam * (H * (c.omega - om));
        const Vec lhs = G(c.x, xp, om);
        rep.max_gradient_residual =
            std::max(rep.max_gradient_residual, (lhs - rhs).norm() / (lam * (1.0 + H.cwiseAbs().maxCoeff())));
        rep.max_stationary_gradient = std::max(rep.max_stationary_gradient, G(c.x, xp, c.omega).norm() / lam);

        // Jacobian of G at omega' by fourth-order differences
        const double hs = 1e-3;
        Mat M(d, d);
        for (int i = 0; i < d; ++i) {
            auto at = [&](double t) {
                Vec o = c.omega;
                o(i) += t;
                return G(c.x, xp, o);
            };
            const Vec col = (-at(2 * hs) + 8.0 * at(hs) - 8.0 * at(-hs) + at(-2 * hs)) / (12.0 * hs);
            M.col(i) = col;
        }
        const double J = curvature_J(phase, c.x, c.omega);
        const double want = std::pow(-lam, d) * J;
        const double got = M.determinant();
        const double scale = std::pow(lam, d);
        double res;
        if (std::abs(J) >= 1e-3) {
            res = std::abs(got - want) / std::abs(want);
            ++rep.hessian_samples;
        } else {
            res = std::abs(got - want) / scale;
        }
        rep.max_hessian_residual = std::max(rep.max_hessian_residual, res);

        const double val = xp.dot(phase.grad_xi(c.x, lift(c.omega)));
        rep.max_value_residual = std::max(rep.max_value_residual,
                                          std::abs(val - phase.eval(c.x, xp)) / (xp.norm() * (1.0 + c.x.norm())));
    }
    return rep;
}

SignConvention determine_sign_convention(int k) {
    if (k < 4) throw PreconditionError("sign convention: k must be at least 4");
    auto hw = make_phase("halfwave", 2);
    const Vec x = vec2(0.1, -0.2);
    Vec omp(1);
    omp(0) = 0.05;
    const double lam = std::exp2(k), wmax = 0.25;
    const Vec xp = lam * lift(omp);
    OscIntegralSpec spec;
    spec.dim = 1;
    spec.lo = Vec::Constant(1, -2 * wmax);
    spec.hi = Vec::Constant(1, 2 * wmax);
    spec.phase = [&](const Vec& om) { return xp.dot(hw->grad_xi(x, lift(om))); };
    spec.amplitude = [&](const Vec& om) { return Complex(rho(std::abs(om(0)) / wmax)); };
    spec.oscillation_scale = 1.2 * lam * (2 * wmax + omp.norm());
    spec.amplitude_scale = 0.05;
    const OscResult r = oscillatory_quadrature(spec, 8.0);
    const Mat H = hw->hess_omega(x, omp);
    const double J = H.determinant();
    const int mu = hessian_mu(H);
    const Complex base = cis(hw->eval(x, xp)) * rho(omp.norm() / wmax) / std::sqrt(lam * std::abs(J));
    SignConvention sc;
    sc.k = k;
    sc.error_plus = std::abs(r.value - base * std::polar(1.0, mu * kPi / 4)) / std::abs(base);
    sc.error_minus = std::abs(r.value - base * std::polar(1.0, -mu * kPi / 4)) / std::abs(base);
    sc.stationary_sign = sc.error_plus < sc.error_minus ? 1 : -1;
    sc.damping_sign = -sc.stationary_sign;
    return sc;
}

}  // namespace fiolab
