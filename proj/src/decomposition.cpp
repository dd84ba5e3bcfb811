#include "fiolab/decomposition.hpp"

#include <algorithm>
#include <cmath>

namespace fiolab {

std::string to_string(OperatorVariant v) {
    switch (v) {
        case OperatorVariant::deg: return "deg";
        case OperatorVariant::nondeg: return "nondeg";
        default: return "full";
    }
}

void OperatorSpec::validate() const {
    if (!phase || !symbol) throw PreconditionError("operator: phase and symbol required");
    if (phase->dim() != symbol->dim()) throw PreconditionError("operator: dimension mismatch");
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("operator: eps must lie in (0,1)");
    if (k_lo > k_hi) throw PreconditionError("operator: empty k range");
    if (k_lo < symbol->params().k_min) throw PreconditionError("operator: k below k_min");
}

PiecePtr OperatorSpec::piece(int k) const {
    if (k < k_lo || k > k_hi) throw PreconditionError("operator: k outside the configured range");
    const PieceKind kind = variant == OperatorVariant::deg      ? PieceKind::degenerate
                           : variant == OperatorVariant::nondeg ? PieceKind::nondegenerate
                                                                : PieceKind::full;
    return std::make_shared<const DyadicSymbolPiece>(symbol, phase, k, eps, kind);
}

Vec kernel_center_y(const PhaseFunction& phase) {
    const int n = phase.dim();
    Vec e = Vec::Zero(n);
    e(n - 1) = 1.0;
    return phase.grad_xi(Vec::Zero(n), e);
}

std::vector<Vec> sample_y(const PhaseFunction& phase, int count, double spread, std::uint64_t seed) {
    const int n = phase.dim();
    std::vector<Vec> ys{kernel_center_y(phase)};
    Halton h(n, seed);
    while (static_cast<int>(ys.size()) < count) {
        auto u = h.next();
        Vec y = ys.front();
        for (int i = 0; i < n; ++i) y(i) += spread * (2 * u[i] - 1);
        ys.push_back(y);
    }
    return ys;
}

KernelNorm kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts) {
    op.validate();
    const PiecePtr p = op.piece(k);
    KernelNorm r;
    r.k = k;
    r.y = y;
    const KernelRow row = kernel_row(*op.phase, *p, y, opts);
    r.value = row.l1();
    r.leakage = row.leakage;
    r.method = row.method;
    r.grid_points = row.values.grid.size();
    return r;
}

double deg_kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts) {
    if (op.variant != OperatorVariant::deg) throw PreconditionError("deg_kernel_l1: operator variant must be deg");
    return kernel_l1(op, k, y, opts).value;
}

double nodecay_kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts) {
    if (op.variant != OperatorVariant::full) throw PreconditionError("nodecay_kernel_l1: operator variant must be full");
    return kernel_l1(op, k, y, opts).value;
}

DecayFit fit_decay_slope(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 4) throw PreconditionError("fit_decay_slope: need at least 4 points");
    DecayFit f;
    f.series = series;
    const double m = static_cast<double>(series.size());
    double sx = 0, sy = 0;
    for (auto [k, v] : series) {
        if (!(v > 0.0) || !std::isfinite(v)) throw DataError("fit_decay_slope: values must be positive and finite");
        sx += k;
        sy += std::log2(v);
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0;
    for (auto [k, v] : series) {
        sxx += (k - mx) * (k - mx);
        sxy += (k - mx) * (std::log2(v) - my);
    }
    if (!(sxx > 0)) throw DataError("fit_decay_slope: k values must not all coincide");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0;
    for (auto [k, v] : series) {
        const double e = std::log2(v) - (f.intercept + f.slope * k);
        ssr += e * e;
    }
    f.slope_stderr = std::sqrt(ssr / (m - 2) / sxx);
    return f;
}

double fitted_loss_constant(double slope, double ideal_slope, double eps) { return (slope - ideal_slope) / eps; }

// --- tubes ---------------------------------------------------------------------------------

double TubeFamily::lattice_sum(const Vec& omega) const {
    double s = 0.0;
    for (const auto& w : weights) s += w.eval(omega);
    return s * cell_volume;
}

TubeFamily build_tube_family(const PhaseFunction& phase, const Vec& x, int k, double eps, double omega_max,
                             double spacing_factor) {
    const int n = phase.dim(), d = n - 1;
    if (x.size() != n) throw PreconditionError("build_tube_family: dimension mismatch");
    if (!(spacing_factor > 0 && spacing_factor <= 1)) throw PreconditionError("build_tube_family: bad spacing factor");
    TubeFamily fam;
    fam.x = x;
    fam.k = k;
    fam.eps = eps;
    fam.spacing = std::exp2(-0.5 * k) * spacing_factor;
    fam.cell_volume = std::pow(fam.spacing, d);
    // Q >= 2^{-eps k}, so supports have radius at most sqrt(2^{1-k+eps k})
    const double reach = omega_max + 1.01 * std::sqrt(std::exp2(1 - k + eps * k));
    const int m = static_cast<int>(std::ceil(reach / fam.spacing));
    const int side = 2 * m + 1;
    const int total = d == 1 ? side : side * side;
    for (int a = 0; a < total; ++a) {
        Vec om(d);
        int r = a;
        for (int i = 0; i < d; ++i, r /= side) om(i) = (r % side - m) * fam.spacing;
        if (om.norm() > reach) continue;
        PartitionWeight w(phase, x, om, k, eps);
        if (om.norm() - w.support_radius() > omega_max) continue;
        fam.nondeg_weight.push_back(nondeg_cutoff(w.curvature().J, k, eps));
        fam.centers.push_back(om);
        fam.weights.push_back(std::move(w));
    }
    return fam;
}

PartitionCheck check_partition(const PhaseFunction& phase, const TubeFamily& fam, int samples, double omega_max) {
    const int d = phase.dim() - 1;
    PartitionCheck pc;
    Halton h(d, 17);
    const double thr = std::exp2(-fam.eps * fam.k - 1);
    int tries = 0;
    while (pc.samples < samples && tries < 50 * samples) {
        ++tries;
        auto u = h.next();
        Vec om(d);
        if (d == 1) {
            om(0) = omega_max * (2 * u[0] - 1);
        } else {
            const double r = omega_max * std::sqrt(u[0]), t = kTwoPi * u[1];
            om << r * std::cos(t), r * std::sin(t);
        }
        if (std::abs(curvature_J(phase, fam.x, om)) < thr) continue;
        const double psi = psi_average(phase, fam.x, om, fam.k, fam.eps).value;
        pc.max_error = std::max(pc.max_error, std::abs(fam.lattice_sum(om) / psi - 1.0));
        ++pc.samples;
    }
    return pc;
}

TubeKernelResult tube_kernel_l1(const PhaseFunction& phase, const TubePiece& tube, const Vec& y,
                                const KernelRowOptions& opts, double dilation) {
    const int n = phase.dim(), d = n - 1, k = tube.k();
    TubeKernelResult res;
    const KernelRow row = kernel_row(phase, tube, y, opts);
    res.normalized = row.l1();
    res.l1 = std::exp2(-0.5 * d * k) * res.normalized;
    res.leakage = row.leakage;
    if (res.normalized == 0.0) return res;
    const Vec& wD = tube.center();
    const Vec th = lift(wD);
    const Mat& Qis = tube.weight().curvature().Q_inv_sqrt;
    const double rn = dilation * std::exp2(-k), rt = dilation * std::exp2(-0.5 * k);
    const auto& g = row.values.grid;
    double inside = 0.0, total = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double a = std::abs(row.values.values[j]);
        if (a == 0.0) continue;
        total += a;
        const Vec x = g.point(j);
        const double theta = phase.eval(x, th) - y.dot(th);
        if (std::abs(theta) > rn) continue;
        const Vec gv = phase.grad_omega(x, wD) - y.head(d);
        if ((Qis * gv).norm() > rt) continue;
        inside += a;
    }
    res.disk_fraction = inside / total;
    return res;
}

TaylorRemainderReport taylor_remainder_scan(const PhaseFunction& phase, const TubePiece& tube, int samples,
                                            std::uint64_t seed) {
    if (samples < 100) throw PreconditionError("taylor_remainder_scan: need at least 100 samples");
    const int d = phase.dim() - 1, k = tube.k();
    TaylorRemainderReport rep;
    rep.k = k;
    rep.omega_D = tube.center();
    rep.x = tube.frozen_x();
    rep.samples = samples;
    const Vec& wD = rep.omega_D;
    const Vec& x = rep.x;
    const double p0 = phase.eval_omega(x, wD);
    const Vec g0 = phase.grad_omega(x, wD);
    const Mat H = phase.hess_omega(x, wD);
    const Mat& Qis = tube.weight().curvature().Q_inv_sqrt;
    Halton h(d, seed);
    for (int s = 0; s < samples; ++s) {
        auto u = h.next();
        Vec z(d);
        if (d == 1) {
            z(0) = std::sqrt(2.0) * (2 * u[0] - 1);
        } else {
            const double r = std::sqrt(2.0 * u[0]), t = kTwoPi * u[1];
            z << r * std::cos(t), r * std::sin(t);
        }
        const Vec delta = std::exp2(-0.5 * k) * (Qis * z);
        const double e = phase.eval_omega(x, wD + delta) - p0 - g0.dot(delta);
        const double lead = 0.5 * delta.dot(H * delta);
        rep.max_abs = std::max(rep.max_abs, std::abs(e));
        rep.max_lambda_abs = std::max(rep.max_lambda_abs, std::exp2(k) * std::abs(e));
        rep.max_leading_dev = std::max(rep.max_leading_dev, std::abs(e - lead) * std::exp2(1.5 * k));
    }
    return rep;
}

}  // namespace fiolab
