#include "fiolab/symbols.hpp"
#include "fiolab/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace fiolab {

double SymbolFunction::bound_constant(int a, int b) const {
    return 10.0 * std::pow(20.0, a) * std::pow(10.0, b);
}

double ProjectiveAmplitude::spatial(const Vec&) const {
    throw PreconditionError("amplitude is not x-separable");
}

Complex ProjectiveAmplitude::angular_only(const Vec&) const {
    throw PreconditionError("amplitude is not x-separable");
}

Complex ProjectiveAmplitude::eval_factored(const Vec& x, const Vec& xi) const {
    const int n = static_cast<int>(xi.size());
    const double l = xi(n - 1);
    if (!(l > 0.0)) return 0.0;
    const Vec omega = xi.head(n - 1) / l;
    if ((omega - omega_center()).norm() > omega_radius()) return 0.0;
    const double g = radial(xi.norm());
    if (g == 0.0) return 0.0;
    return angular(x, omega) * g;
}

// --- standard symbol --------------------------------------------------------

StandardSymbol::StandardSymbol(StandardSymbolParams p) : p_(p) {
    if (p_.n < 2 || p_.n > 3) throw PreconditionError("symbol: n must be 2 or 3");
    if (p_.omega_max > 0.5) throw PreconditionError("symbol: omega_max must be <= 1/2");
}

StandardSymbolParams StandardSymbol::defaults(int n) {
    StandardSymbolParams p;
    p.n = n;
    p.order = -(n - 1) / 2.0;
    return p;
}

double StandardSymbol::x_half_width() const {
    return p_.spatial_plateau > 0 ? 2.0 * p_.spatial_plateau : std::numeric_limits<double>::infinity();
}

double StandardSymbol::spatial(const Vec& x) const {
    return p_.spatial_plateau > 0 ? box_cutoff(x, p_.spatial_plateau) : 1.0;
}

double StandardSymbol::cone_factor(const Vec& omega) const {
    return p_.omega_max > 0 ? rho(2.0 * omega.norm() / p_.omega_max) : 1.0;
}

Complex StandardSymbol::angular(const Vec& x, const Vec& omega) const {
    const double s = spatial(x);
    if (s == 0.0) return 0.0;
    return s * cone_factor(omega);
}

Complex StandardSymbol::angular_only(const Vec& omega) const { return cone_factor(omega); }

double StandardSymbol::radial(double t) const {
    double v = std::pow(1.0 + t * t, 0.5 * p_.order);
    if (p_.low_frequency_cutoff) v *= 1.0 - rho(t * std::exp2(-p_.k_min));
    return v;
}

double StandardSymbol::radial_lo() const { return p_.low_frequency_cutoff ? std::exp2(p_.k_min) : 0.0; }

double StandardSymbol::omega_radius() const {
    return p_.omega_max > 0 ? p_.omega_max : std::numeric_limits<double>::infinity();
}

double StandardSymbol::omega_scale() const { return p_.omega_max > 0 ? p_.omega_max / 16 : 1.0 / 16; }

Complex StandardSymbol::eval(const Vec& x, const Vec& xi) const {
    const int n = p_.n;
    if (p_.omega_max > 0) {
        const double l = xi(n - 1);
        if (!(l > 0.0)) return 0.0;
        const Vec omega = xi.head(n - 1) / l;
        if (omega.norm() >= p_.omega_max) return 0.0;
        return spatial(x) * cone_factor(omega) * radial(xi.norm());
    }
    return spatial(x) * radial(xi.norm());
}

// --- dyadic pieces ----------------------------------------------------------

std::string to_string(PieceKind k) {
    switch (k) {
        case PieceKind::full: return "full";
        case PieceKind::degenerate: return "deg";
        default: return "nondeg";
    }
}

DyadicSymbolPiece::DyadicSymbolPiece(SymbolPtr base, PhasePtr phase, int k, double eps, PieceKind kind)
    : base_(std::move(base)), phase_(std::move(phase)), k_(k), eps_(eps), kind_(kind) {
    if (!base_ || !phase_) throw PreconditionError("dyadic piece: null base or phase");
    if (base_->dim() != phase_->dim()) throw PreconditionError("dyadic piece: dimension mismatch");
    if (k_ < base_->params().k_min) throw PreconditionError("dyadic piece: k below k_min");
    if (!(eps_ > 0.0 && eps_ < 1.0)) throw PreconditionError("dyadic piece: eps must lie in (0,1)");
    if (kind_ == PieceKind::full) return;
    // sampled range of |J| over the support, padded by 5%
    const int n = dim();
    const double w = std::min(base_->x_half_width(), 2.0);
    const double R = base_->omega_radius();
    const bool ti = phase_->translation_invariant();
    const int nx = ti ? 1 : 17, nw = n == 2 ? 65 : 17;
    double jmin = std::numeric_limits<double>::infinity(), jmax = 0.0;
    Vec x(n), om(n - 1);
    const int xt = n == 2 ? nx * nx : nx * nx * nx;
    const int wt = n == 2 ? nw : nw * nw;
    for (int a = 0; a < xt; ++a) {
        int r = a;
        for (int i = 0; i < n; ++i, r /= nx) x(i) = ti ? 0.0 : -w + 2 * w * (r % nx) / (nx - 1);
        if (!ti && base_->spatial(x) == 0.0) continue;
        for (int b = 0; b < wt; ++b) {
            int q = b;
            for (int i = 0; i < n - 1; ++i, q /= nw) om(i) = -R + 2 * R * (q % nw) / (nw - 1);
            if (om.norm() > R) continue;
            const double J = std::abs(curvature_J(*phase_, x, om));
            jmin = std::min(jmin, J);
            jmax = std::max(jmax, J);
        }
    }
    const double s = std::exp2(eps_ * k_);
    if (jmin * s / 1.05 >= 2.0) constant_cutoff_ = cutoff(2.0 * s);
    else if (jmax * s * 1.05 <= 1.0) constant_cutoff_ = cutoff(0.0);
}

double DyadicSymbolPiece::cutoff(double J) const {
    switch (kind_) {
        case PieceKind::full: return 1.0;
        case PieceKind::degenerate: return deg_cutoff(J, k_, eps_);
        default: return nondeg_cutoff(J, k_, eps_);
    }
}

Complex DyadicSymbolPiece::angular(const Vec& x, const Vec& omega) const {
    const Complex a = base_->angular(x, omega);
    if (a == 0.0 || kind_ == PieceKind::full) return a;
    if (constant_cutoff_ >= 0.0) return a * constant_cutoff_;
    return a * cutoff(curvature_J(*phase_, x, omega));
}

Complex DyadicSymbolPiece::angular_only(const Vec& omega) const {
    const Complex a = base_->angular_only(omega);
    if (a == 0.0 || kind_ == PieceKind::full) return a;
    if (constant_cutoff_ >= 0.0) return a * constant_cutoff_;
    return a * cutoff(curvature_J(*phase_, Vec::Zero(dim()), omega));
}

bool DyadicSymbolPiece::x_separable() const {
    return kind_ == PieceKind::full || phase_->translation_invariant() || constant_cutoff_ >= 0.0;
}

double DyadicSymbolPiece::radial(double t) const { return base_->radial(t) * eta_k(k_, t); }
double DyadicSymbolPiece::radial_lo() const { return std::max(std::exp2(k_ - 1), base_->radial_lo()); }
double DyadicSymbolPiece::radial_hi() const { return std::exp2(k_ + 1); }

double DyadicSymbolPiece::omega_scale() const {
    if (kind_ == PieceKind::full || constant_cutoff_ >= 0.0) return base_->omega_scale();
    return std::min(base_->omega_scale(), std::exp2(-eps_ * k_) / 48);
}

Complex DyadicSymbolPiece::eval(const Vec& x, const Vec& xi) const {
    const int n = dim();
    const double l = xi(n - 1);
    const double r = xi.norm();
    const double e = eta_k(k_, r);
    if (e == 0.0) return 0.0;
    const Complex a = base_->eval(x, xi);
    if (a == 0.0) return 0.0;
    if (kind_ == PieceKind::full) return a * e;
    if (!(l > 0.0)) return 0.0;
    const Vec omega = xi.head(n - 1) / l;
    return a * cutoff(curvature_J(*phase_, x, omega)) * e;
}

std::pair<PiecePtr, PiecePtr> dyadic_pieces(SymbolPtr a, PhasePtr phase, int k, double eps) {
    auto deg = std::make_shared<DyadicSymbolPiece>(a, phase, k, eps, PieceKind::degenerate);
    auto nondeg = std::make_shared<DyadicSymbolPiece>(a, phase, k, eps, PieceKind::nondegenerate);
    return {deg, nondeg};
}

// --- partition weights ------------------------------------------------------

PartitionWeight::PartitionWeight(const PhaseFunction& phase, const Vec& x, const Vec& omega_D, int k, double eps)
    : PartitionWeight(build_Q(phase, x, omega_D, k, eps)) {}

PartitionWeight::PartitionWeight(CurvatureData c) : c_(std::move(c)) {
    center_ = c_.omega;
    const int d = static_cast<int>(c_.Q.rows());
    scale_ = std::exp2(0.5 * d * c_.k);
    sqrt_det_ = std::sqrt(c_.det_Q);
}

double PartitionWeight::eval(const Vec& omega) const {
    const Vec v = omega - center_;
    const double q = v.dot(c_.Q * v);
    const double r = rho(std::exp2(c_.k) * q);
    return r == 0.0 ? 0.0 : scale_ * r * sqrt_det_;
}

double PartitionWeight::support_radius() const {
    return std::sqrt(std::exp2(1 - c_.k) / c_.q_eigenvalues.minCoeff());
}

double PartitionWeight::plateau_radius() const {
    return std::sqrt(std::exp2(-c_.k) / c_.q_eigenvalues.maxCoeff());
}

Vec PartitionWeight::radii() const {
    Vec r(c_.q_eigenvalues.size());
    for (int i = 0; i < r.size(); ++i) r(i) = std::sqrt(std::exp2(1 - c_.k) / c_.q_eigenvalues(i));
    return r;
}

double frozen_psi_constant(int d) {
    // radial integral over [0, sqrt 2] by composite Gauss-Legendre
    const double R = std::sqrt(2.0);
    const auto rule = composite_gauss_legendre(0.0, R, 64, 16);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double r = rule.nodes[i];
        s += rule.weights[i] * rho(r * r) * (d == 1 ? 2.0 : kTwoPi * r);
    }
    return s;
}

namespace {

double psi_pass(const PhaseFunction& phase, const Vec& x, const Vec& omega, int k, double eps, const Mat& T,
                double jac, double U, int panels, int gl, double* boundary_max, int* nodes) {
    const int d = static_cast<int>(omega.size());
    const auto rule = composite_gauss_legendre(-U, U, panels, gl);
    const std::size_t m = rule.nodes.size();
    double sum = 0.0;
    auto f = [&](const Vec& u) {
        PartitionWeight w(phase, x, omega + T * u, k, eps);
        return w.eval(omega) * jac;
    };
    Vec u(d);
    if (d == 1) {
        for (std::size_t i = 0; i < m; ++i) {
            u(0) = rule.nodes[i];
            sum += rule.weights[i] * f(u);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                u << rule.nodes[i], rule.nodes[j];
                sum += rule.weights[i] * rule.weights[j] * f(u);
            }
    }
    *nodes += static_cast<int>(d == 1 ? m : m * m);
    // support check on the box boundary
    double bmax = 0.0;
    const int ring = 64;
    for (int i = 0; i <= ring; ++i) {
        const double t = -U + 2 * U * i / ring;
        if (d == 1) {
            u(0) = (i % 2 == 0) ? -U : U;
            bmax = std::max(bmax, f(u));
        } else {
            for (Vec e : {vec2(t, -U), vec2(t, U), vec2(-U, t), vec2(U, t)}) bmax = std::max(bmax, f(e));
        }
    }
    *boundary_max = bmax;
    return sum;
}

}  // namespace

PsiResult psi_average(const PhaseFunction& phase, const Vec& x, const Vec& omega, int k, double eps,
                      const PsiOptions& opts) {
    const int d = static_cast<int>(omega.size());
    const CurvatureData c0 = build_Q(phase, x, omega, k, eps);
    const Mat T = std::exp2(-0.5 * k) * c0.Q_inv_sqrt;
    const double jac = std::exp2(-0.5 * d * k) / std::sqrt(c0.det_Q);
    double U = 1.6;
    PsiResult res;
    for (int grow = 0; grow < 5; ++grow, U *= 1.5) {
        double bmax = 0.0, prev = 0.0;
        prev = psi_pass(phase, x, omega, k, eps, T, jac, U, 1, opts.gl_points, &bmax, &res.nodes);
        if (bmax > 1e-13 * std::max(prev, 1e-300)) continue;
        for (int panels = 2; panels <= opts.max_panels; panels *= 2) {
            double b2 = 0.0;
            const double cur = psi_pass(phase, x, omega, k, eps, T, jac, U, panels, opts.gl_points, &b2, &res.nodes);
            const double err = std::abs(cur - prev);
            if (err <= opts.tolerance * std::abs(cur)) {
                res.value = cur;
                res.error_estimate = err / std::abs(cur);
                return res;
            }
            prev = cur;
        }
        throw AccuracyError("psi_average: refinement did not converge");
    }
    throw AccuracyError("psi_average: weight support not contained in the quadrature box");
}

// --- tube pieces ------------------------------------------------------------

TubePiece::TubePiece(PiecePtr piece, Vec omega_D, Vec x)
    : piece_(std::move(piece)),
      omega_D_(std::move(omega_D)),
      x_(std::move(x)),
      weight_(*piece_->phase(), x_, omega_D_, piece_->k(), piece_->eps()) {
    const int d = dim() - 1;
    table_n_ = d == 1 ? 65 : 21;
    const double R = weight_.support_radius() * 1.05;
    table_h_ = 2 * R / (table_n_ - 5);
    for (int i = 0; i < d; ++i) table_lo_[i] = omega_D_(i) - R - 2 * table_h_;
    const auto& ph = *piece_->phase();
    const int cnt = d == 1 ? table_n_ : table_n_ * table_n_;
    table_.resize(cnt);
    for (int idx = 0; idx < cnt; ++idx) {
        Vec w(d);
        w(0) = table_lo_[0] + (idx % table_n_) * table_h_;
        if (d == 2) w(1) = table_lo_[1] + (idx / table_n_) * table_h_;
        table_[idx] = psi_average(ph, x_, w, piece_->k(), piece_->eps()).value;
    }
}

double TubePiece::psi_x(const Vec& omega) const {
    const int d = dim() - 1;
    double t[2]{}, fr[2]{};
    int i0[2]{};
    for (int i = 0; i < d; ++i) {
        t[i] = (omega(i) - table_lo_[i]) / table_h_;
        i0[i] = static_cast<int>(std::floor(t[i]));
        fr[i] = t[i] - i0[i];
        if (i0[i] < 1 || i0[i] > table_n_ - 3) {
            return psi_average(*piece_->phase(), x_, omega, piece_->k(), piece_->eps()).value;
        }
    }
    if (d == 1) return catmull_rom(&table_[i0[0] - 1], fr[0]);
    double col[4];
    for (int j = 0; j < 4; ++j) col[j] = catmull_rom(&table_[(i0[1] - 1 + j) * table_n_ + i0[0] - 1], fr[0]);
    return catmull_rom(col, fr[1]);
}

Complex TubePiece::angular(const Vec& x, const Vec& omega) const {
    const double w = weight_.eval(omega);
    if (w == 0.0) return 0.0;
    return piece_->angular(x, omega) * (w / psi_x(omega));
}

Complex TubePiece::angular_only(const Vec& omega) const {
    const double w = weight_.eval(omega);
    if (w == 0.0) return 0.0;
    return piece_->angular_only(omega) * (w / psi_x(omega));
}

double TubePiece::omega_radius() const { return weight_.support_radius(); }

double TubePiece::omega_scale() const {
    return std::min(piece_->omega_scale(), weight_.radii().minCoeff() / 8);
}

Complex TubePiece::eval(const Vec& x, const Vec& xi) const { return eval_factored(x, xi); }

Vec TubePiece::omega_of(const Vec& zeta) const {
    return omega_D_ + std::exp2(-0.5 * k()) * (weight_.curvature().Q_inv_sqrt * zeta);
}

Complex TubePiece::rescaled(double lambda, const Vec& zeta) const {
    const double r = rho(zeta.squaredNorm());
    if (r == 0.0) return 0.0;
    const int d = dim() - 1;
    const Vec omega = omega_of(zeta);
    const Complex a = piece_->eval(x_, lambda * lift(omega));
    return std::exp2(-0.5 * d * k()) * std::pow(lambda, d) * a * r / psi_x(omega);
}

// --- finite-difference symbol checks ----------------------------------------

Complex mixed_difference(const std::function<Complex(const DVec&)>& f, const DVec& p, const std::vector<int>& mult,
                         const std::vector<double>& step) {
    struct Stencil {
        std::vector<int> off;
        std::vector<double> c;
    };
    static const Stencil st[5] = {
        {{0}, {1.0}},
        {{-1, 1}, {-0.5, 0.5}},
        {{-1, 0, 1}, {1.0, -2.0, 1.0}},
        {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}},
        {{-2, -1, 0, 1, 2}, {1.0, -4.0, 6.0, -4.0, 1.0}},
    };
    std::vector<int> axes;
    for (std::size_t i = 0; i < mult.size(); ++i)
        if (mult[i] > 0) {
            if (mult[i] > 4) throw PreconditionError("mixed_difference: order above 4");
            axes.push_back(static_cast<int>(i));
        }
    double scale = 1.0;
    for (int a : axes) scale *= std::pow(step[a], mult[a]);
    Complex sum = 0.0;
    std::vector<std::size_t> pos(axes.size(), 0);
    while (true) {
        DVec q = p;
        double c = 1.0;
        for (std::size_t j = 0; j < axes.size(); ++j) {
            const Stencil& s = st[mult[axes[j]]];
            q(axes[j]) += s.off[pos[j]] * step[axes[j]];
            c *= s.c[pos[j]];
        }
        sum += c * f(q);
        std::size_t j = 0;
        for (; j < axes.size(); ++j) {
            if (++pos[j] < st[mult[axes[j]]].off.size()) break;
            pos[j] = 0;
        }
        if (j == axes.size()) break;
    }
    return sum / scale;
}

namespace {

std::vector<std::vector<int>> multi_indices(int n, int max_order) {
    std::vector<std::vector<int>> out;
    std::vector<int> a(n, 0);
    std::function<void(int, int)> rec = [&](int i, int left) {
        if (i == n) {
            out.push_back(a);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            a[i] = v;
            rec(i + 1, left - v);
        }
        a[i] = 0;
    };
    rec(0, max_order);
    return out;
}

}  // namespace

SymbolBoundsReport verify_symbol_bounds(const SymbolFunction& s, const SymbolBoundsOptions& opts) {
    if (opts.max_order > 3 || opts.max_order < 0) throw PreconditionError("verify_symbol_bounds: max_order must be <= 3");
    const int n = s.dim();
    const auto mis = multi_indices(n, opts.max_order);
    SymbolBoundsReport rep;
    rep.sup_by_alpha_order.assign(opts.max_order + 1, 0.0);
    rep.sup_by_beta_order.assign(opts.max_order + 1, 0.0);
    std::vector<SymbolBoundsEntry> entries;
    for (const auto& a : mis)
        for (const auto& b : mis) {
            SymbolBoundsEntry e;
            for (int i = 0; i < n; ++i) {
                e.alpha[i] = a[i];
                e.beta[i] = b[i];
                e.alpha_order += a[i];
                e.beta_order += b[i];
            }
            e.declared = s.bound_constant(e.alpha_order, e.beta_order);
            entries.push_back(e);
        }

    Halton seq(2 * n + 1, opts.seed);
    auto f = [&](const DVec& p) { return s.eval(Vec(p.head(n)), Vec(p.tail(n))); };
    const double xw = std::min(opts.domain.x_half_width, s.x_half_width());
    for (int smp = 0; smp < opts.samples; ++smp) {
        auto u = seq.next();
        ConeSample c = sample_cone(u, n, opts.domain.omega_max, opts.domain.lambda_lo, opts.domain.lambda_hi,
                                   std::isfinite(xw) ? xw : 1.0);
        const Vec xi = c.xi();
        DVec p(2 * n);
        p.head(n) = c.x;
        p.tail(n) = xi;
        std::vector<double> step(2 * n);
        for (int i = 0; i < n; ++i) {
            step[i] = opts.h_x;
            step[n + i] = opts.h_xi_rel * xi.norm();
        }
        const double base = 1.0 + xi.norm();
        for (auto& e : entries) {
            std::vector<int> mult(2 * n);
            for (int i = 0; i < n; ++i) {
                mult[i] = e.alpha[i];
                mult[n + i] = e.beta[i];
            }
            const double v = std::abs(mixed_difference(f, p, mult, step)) *
                             std::pow(base, e.beta_order - s.order());
            e.sup_normalized = std::max(e.sup_normalized, v);
        }
    }
    for (auto& e : entries) {
        e.violated = e.sup_normalized > e.declared * (1.0 + 1e-9) + 1e-12;
        rep.violations += e.violated ? 1 : 0;
        rep.sup_by_alpha_order[e.alpha_order] = std::max(rep.sup_by_alpha_order[e.alpha_order], e.sup_normalized);
        rep.sup_by_beta_order[e.beta_order] = std::max(rep.sup_by_beta_order[e.beta_order], e.sup_normalized);
    }
    rep.entries = std::move(entries);
    return rep;
}

RescaledBoundsReport verify_rescaled_bounds(const TubePiece& tube, int samples, std::uint64_t seed) {
    const int d = tube.dim() - 1;
    const int k = tube.k();
    RescaledBoundsReport rep;
    Halton seq(d + 1, seed);
    auto f = [&](const DVec& p) { return tube.rescaled(p(0), Vec(p.tail(d))); };
    const auto zetas = multi_indices(d, 2);
    for (int smp = 0; smp < samples; ++smp) {
        auto u = seq.next();
        DVec p(d + 1);
        p(0) = std::exp2(k - 1) + u[0] * (std::exp2(k + 1) - std::exp2(k - 1));
        if (d == 1) {
            p(1) = std::sqrt(2.0) * (2 * u[1] - 1);
        } else {
            const double r = std::sqrt(2.0) * std::sqrt(u[1]);
            const double a = kTwoPi * u[2];
            p(1) = r * std::cos(a);
            p(2) = r * std::sin(a);
        }
        std::vector<double> step(d + 1, 0.02);
        step[0] = 0.01 * std::exp2(k);
        for (int b = 0; b <= 2; ++b)
            for (const auto& z : zetas) {
                int dz = 0;
                std::vector<int> mult(d + 1);
                mult[0] = b;
                for (int i = 0; i < d; ++i) {
                    mult[i + 1] = z[i];
                    dz += z[i];
                }
                const double v = std::abs(mixed_difference(f, p, mult, step)) * std::exp2(k * b);
                rep.sup[b][dz] = std::max(rep.sup[b][dz], v);
            }
    }
    return rep;
}

}  // namespace fiolab
