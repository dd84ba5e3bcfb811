#include "doctest.h"

#include "fiolab/decomposition.hpp"

#include <cmath>

using namespace fiolab;

namespace {

SymbolPtr standard(int n, double order = -0.5) {
    auto p = StandardSymbol::defaults(n);
    p.order = order;
    return std::make_shared<const StandardSymbol>(p);
}

}  // namespace

TEST_CASE("decay fit examples") {
    std::vector<std::pair<double, double>> s, c;
    for (int k = 4; k <= 10; ++k) {
        s.push_back({double(k), std::exp2(-0.5 * k)});
        c.push_back({double(k), 3.0});
    }
    auto f = fit_decay_slope(s);
    CHECK(std::abs(f.slope + 0.5) < 1e-12);
    CHECK(f.slope_stderr < 1e-12);
    CHECK(std::abs(fit_decay_slope(c).slope) < 1e-14);
    c[2].second = 0.0;
    CHECK_THROWS_AS(fit_decay_slope(c), DataError);
    CHECK_THROWS_AS(fit_decay_slope({{4, 1.0}, {5, 1.0}, {6, 1.0}}), PreconditionError);
    CHECK(fitted_loss_constant(-0.3, -0.5, 0.25) == doctest::Approx(0.8));
}

TEST_CASE("operator spec preconditions and the trivial degenerate piece") {
    OperatorSpec op{make_phase("halfwave", 2), standard(2), 0.25, 2, 6, OperatorVariant::full};
    CHECK_THROWS_AS(op.validate(), PreconditionError);
    op.k_lo = 4;
    CHECK_THROWS_AS(op.piece(3), PreconditionError);
    const Vec y = kernel_center_y(*op.phase);
    CHECK(y(0) == doctest::Approx(0.0));
    CHECK(y(1) == doctest::Approx(1.0));
    // |J| ~ 1 for the half-wave phase, so its degenerate part vanishes once 2^{eps k} >= 2
    op.variant = OperatorVariant::deg;
    CHECK(deg_kernel_l1(op, 5, y) == 0.0);
    CHECK_THROWS_AS(nodecay_kernel_l1(op, 5, y), PreconditionError);
}

TEST_CASE("degenerate plus nondegenerate rows reproduce the full row") {
    auto ph = make_phase("cusp", 2);
    auto a = standard(2);
    const Vec y = vec2(0.05, 0.0);
    DyadicSymbolPiece full(a, ph, 6, 0.25, PieceKind::full), deg(a, ph, 6, 0.25, PieceKind::degenerate),
        nd(a, ph, 6, 0.25, PieceKind::nondegenerate);
    auto rf = kernel_row(*ph, full, y);
    auto rd = kernel_row_on(*ph, deg, y, rf.values.grid);
    auto rn = kernel_row_on(*ph, nd, y, rf.values.grid);
    double err = 0;
    for (std::size_t j = 0; j < rf.values.values.size(); ++j)
        err = std::max(err, std::abs(rd.values.values[j] + rn.values.values[j] - rf.values.values[j]));
    CHECK(err <= 1e-12 * rf.values.linf());
}

TEST_CASE("half-wave dyadic kernels are uniformly integrable; order -n decays") {
    OperatorSpec op{make_phase("halfwave", 2), standard(2), 0.25, 4, 7, OperatorVariant::full};
    OperatorSpec low{op.phase, standard(2, -2.0), 0.25, 4, 7, OperatorVariant::full};
    const Vec y = kernel_center_y(*op.phase);
    double lo = 1e9, hi = 0, prev = 1e9;
    for (int k = 4; k <= 7; ++k) {
        const double v = nodecay_kernel_l1(op, k, y);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        const double w = nodecay_kernel_l1(low, k, y);
        CHECK(w < prev);
        prev = w;
    }
    CHECK(hi / lo <= 4.0);
}

TEST_CASE("tube family: Q range, radii and partition identity") {
    auto hw = make_phase("halfwave", 2);
    const int k = 8;
    const double eps = 0.25;
    auto fam = build_tube_family(*hw, Vec::Zero(2), k, eps);
    CHECK(fam.centers.size() > 50);
    for (const auto& w : fam.weights) {
        const auto& q = w.curvature().q_eigenvalues;
        CHECK(q.minCoeff() >= std::exp2(-eps * k / 2));
        CHECK(q.maxCoeff() <= std::sqrt(2.0));
        CHECK(w.radii().minCoeff() >= 0.5 * std::exp2(-k / 2.0));
        CHECK(w.radii().maxCoeff() <= 2.0 * std::exp2(eps * k) * std::exp2(-k / 2.0));
    }
    auto pc = check_partition(*hw, fam, 100);
    CHECK(pc.samples == 100);
    CHECK(pc.max_error <= 1e-3);

    // the cusp phase degenerates at omega = 0
    auto cusp = make_phase("cusp", 2);
    auto cf = build_tube_family(*cusp, Vec::Zero(2), k, eps);
    int zero = 0;
    for (std::size_t i = 0; i < cf.centers.size(); ++i) {
        if (std::abs(cf.weights[i].curvature().J) <= std::exp2(-eps * k - 1)) {
            CHECK(cf.nondeg_weight[i] == 0.0);
            ++zero;
        }
    }
    CHECK(zero > 0);
    auto cpc = check_partition(*cusp, cf, 100);
    CHECK(cpc.max_error <= 1e-3);
}

TEST_CASE("saddle phase gives anisotropic ellipsoids") {
    auto s = make_phase("saddle", 3, {{"a1", 1.0}, {"a2", -0.25}});
    const int k = 8;
    PartitionWeight w(*s, Vec::Zero(3), Vec::Zero(2), k, 0.25);
    // Hessian diag(1, -1/4): q_i = sqrt(2^{-eps k} + h_i^2), radii ~ q_i^{-1/2}
    const double reg = std::exp2(-0.25 * k);
    const double q1 = std::sqrt(reg + 1.0), q2 = std::sqrt(reg + 1.0 / 16);
    const Vec r = w.radii();
    CHECK(r.maxCoeff() / r.minCoeff() == doctest::Approx(std::sqrt(q1 / q2)).epsilon(1e-10));
}

TEST_CASE("tube kernels: normalisation, disk mass and Taylor remainders") {
    auto hw = make_phase("halfwave", 2);
    OperatorSpec op{hw, standard(2), 0.25, 4, 10, OperatorVariant::nondeg};
    const Vec y = kernel_center_y(*hw);
    double lo = 1e9, hi = 0;
    for (int k : {6, 8}) {
        TubePiece tube(op.piece(k), Vec::Zero(1), Vec::Zero(2));
        auto r = tube_kernel_l1(*hw, tube, y);
        CHECK(r.disk_fraction >= 0.9);
        lo = std::min(lo, r.normalized);
        hi = std::max(hi, r.normalized);
        auto t = taylor_remainder_scan(*hw, tube, 200);
        CHECK(t.max_lambda_abs <= 10.0);
        CHECK(t.max_leading_dev < 1.0);
    }
    CHECK(hi / lo <= 4.0);
    // linear phase: no quadratic term
    auto lin = make_phase("linear", 2, {{"x0_1", 0.1}, {"x0_2", 0.0}});
    OperatorSpec lop{lin, standard(2), 0.25, 4, 10, OperatorVariant::full};
    TubePiece lt(lop.piece(6), Vec::Zero(1), Vec::Zero(2));
    auto t = taylor_remainder_scan(*lin, lt, 100);
    CHECK(t.max_abs < 1e-14);
    CHECK_THROWS_AS(taylor_remainder_scan(*lin, lt, 50), PreconditionError);
}
