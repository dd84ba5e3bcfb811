#include "doctest.h"

#include "fiolab/factorization.hpp"

#include <cmath>

using namespace fiolab;

namespace {

SymbolPtr standard(int n) { return std::make_shared<const StandardSymbol>(StandardSymbol::defaults(n)); }

AveragingSpec halfwave_spec(int k_lo, int k_hi) {
    AveragingSpec A;
    A.phase = make_phase("halfwave", 2);
    A.k_lo = k_lo;
    A.k_hi = k_hi;
    return A;
}

// composite Simpson on [a, b]
template <class F>
Complex simpson(F f, double a, double b, int m) {
    const double h = (b - a) / m;
    Complex s = f(a) + f(b);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

// grad_x Phi = (0, |xi|): every direction maps onto e_2
// grad_x Phi = xi + |xi|/5 e_1, but the mixed Hessian it reports is wrong, so Newton cannot converge
class MisreportedPhase final : public PhaseFunction {
public:
    MisreportedPhase() : PhaseFunction(2) {}
    std::string name() const override { return "misreported"; }
    double eval(const Vec& x, const Vec& xi) const override { return x.dot(xi) + 0.2 * x(0) * xi.norm(); }

protected:
    Vec grad_x_closed(const Vec&, const Vec& xi) const override { return xi + vec2(0.2 * xi.norm(), 0.0); }
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override { return x + 0.2 * x(0) * xi / xi.norm(); }
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override {
        const double r = xi.norm();
        const Vec u = xi / r;
        return 0.2 * x(0) * (Mat::Identity(2, 2) - u * u.transpose()) / r;
    }
    Mat mixed_hess_closed(const Vec&, const Vec&) const override { return -Mat::Identity(2, 2); }
};

}  // namespace

TEST_CASE("signature and damping factor") {
    Mat H(1, 1);
    H(0, 0) = 2.0;
    CHECK(hessian_mu(H) == 1);
    H(0, 0) = -0.5;
    CHECK(hessian_mu(H) == -1);
    Mat S(2, 2);
    S << 1.0, 0.0, 0.0, -0.25;
    CHECK(hessian_mu(S) == 0);
    AveragingSpec A = halfwave_spec(4, 6);
    H(0, 0) = 4.0;
    const Complex D = A.damping_from_hessian(H, 8);
    CHECK(std::abs(D - std::polar(2.0, kPi / 4)) < 1e-14);
    A.damping_sign = -1;
    CHECK(std::abs(A.damping_from_hessian(H, 8) - std::polar(2.0, -kPi / 4)) < 1e-14);
    // |J| below 2^{-eps k - 1}: fully cut
    H(0, 0) = 0.1;
    CHECK(A.damping_from_hessian(H, 8) == 0.0);
    A.eps = 1.5;
    CHECK_THROWS_AS(A.validate(), PreconditionError);
}

TEST_CASE("stationary-phase sign of the omega integral") {
    const auto sc = determine_sign_convention(8);
    CHECK(sc.stationary_sign == -1);
    CHECK(sc.damping_sign == 1);
    CHECK(sc.error_minus < 0.05);
    CHECK(sc.error_plus > 0.5);
}

TEST_CASE("stationarity identities hold for every built-in phase") {
    for (const char* nm : {"halfwave", "linear", "cusp", "varcoef"}) {
        auto ph = make_phase(nm, 2);
        auto r = verify_stationarity_identities(*ph, 300);
        CHECK(r.max_gradient_residual <= 1e-8);
        CHECK(r.max_stationary_gradient <= 1e-8);
        CHECK(r.max_hessian_residual <= 1e-8);
        CHECK(r.max_value_residual <= 1e-8);
    }
    auto s = make_phase("saddle", 3);
    auto r = verify_stationarity_identities(*s, 300);
    CHECK(r.max_hessian_residual <= 1e-8);
    CHECK(r.max_value_residual <= 1e-8);
    CHECK_THROWS_AS(verify_stationarity_identities(*s, 50), PreconditionError);
}

TEST_CASE("A vanishes for the linear phase") {
    AveragingSpec A;
    A.phase = make_phase("linear", 2);
    A.k_lo = 4;
    A.k_hi = 5;
    auto src = delta_source(2, vec2(0.0, 0.0));
    auto r = apply_A(A, src, GridSpec::cube(2, 64, 2.0));
    CHECK(r.values.linf() == 0.0);
    CHECK(r.nodes == 0);
}

TEST_CASE("half-wave A matches a direct arc average") {
    AveragingSpec A = halfwave_spec(6, 6);
    BandSource f;
    f.center = vec2(0.0, 0.9);
    f.eval = [](int, const Vec& w) {
        return Complex(std::exp(-8.0 * (w - vec2(0.05, 0.9)).squaredNorm()), 0.3 * w(0));
    };
    const GridSpec g = GridSpec::box(2, {8, 8, 1}, {0.4, 0.4, 1}, {0.0, 0.0, 0});
    auto r = apply_A_band(A, f, 6, g);
    double err = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec x = g.point(i);
        // omega' = omega / sqrt(1+omega^2)^3 on [-1/2, 1/2]; J > 0 so the damping carries e^{i pi/4}
        auto integrand = [&](double w) -> Complex {
            const double r1 = std::sqrt(1 + w * w);
            const double J = 1.0 / (r1 * r1 * r1);
            const double cut = 1.0 - rho(J * std::exp2(0.25 * 6));
            const Vec p = x + vec2(w / r1, 1.0 / r1);
            return f.eval(6, p) * rho(std::abs(w) / 0.25) * cut * std::sqrt(J) * std::polar(1.0, kPi / 4);
        };
        const Complex ref = box_cutoff(x, 1.0) * simpson(integrand, -0.5, 0.5, 20000);
        err = std::max(err, std::abs(r.values.values[i] - ref));
        mx = std::max(mx, std::abs(ref));
    }
    CHECK(mx > 0.1);
    CHECK(err <= 1e-9 * mx);
}

TEST_CASE("band kernel radius and delta sources") {
    const double r3 = band_kernel_radius(2, 1e-3), r5 = band_kernel_radius(2, 1e-5);
    CHECK(r3 < r5);
    CHECK(r5 <= eta0_inverse(2).cutoff());
    auto src = delta_source(2, vec2(0.1, 0.2), 1e-3);
    CHECK(src.radius(5) == doctest::Approx(r3 / 32));
    CHECK(src.eval(5, vec2(0.1, 0.2) + vec2(r3 / 32 * 1.01, 0.0)) == 0.0);
    CHECK(std::abs(src.eval(5, vec2(0.1, 0.2)) - 1024.0 * eta0_inverse(2)(0.0)) < 1e-9);
    CHECK_THROWS_AS(delta_source(3, vec2(0, 0)), PreconditionError);
}

TEST_CASE("cubic pullback reproduces cubics and refuses points outside the box") {
    const GridSpec g = GridSpec::cube(2, 64, 2.0);
    auto f = GriddedFunction::sample(g, [](const Vec& x) {
        return Complex(x(0) * x(0) * x(0) - 2 * x(1) * x(0) + 0.5, x(1) * x(1));
    });
    const Vec w = vec2(0.1234, -0.4321);
    const Complex want(w(0) * w(0) * w(0) - 2 * w(1) * w(0) + 0.5, w(1) * w(1));
    // Catmull-Rom is exact to second order
    CHECK(std::abs(interpolate_cubic(f, w) - want) < 1e-4);
    CHECK(std::abs(interpolate_cubic(f, vec2(0.0, 0.0)) - Complex(0.5, 0.0)) < 1e-12);
    CHECK_THROWS_AS(interpolate_cubic(f, vec2(0.995, 0.0)), DomainError);
    CHECK_THROWS_AS(interpolate_cubic(f, vec2(0.0, -1.2)), DomainError);
}

TEST_CASE("summation by parts reproduces the band sum") {
    AveragingSpec A = halfwave_spec(3, 5);
    const GridSpec fg = GridSpec::cube(2, 512, 4.0);
    const GridSpec xg = GridSpec::box(2, {48, 48, 1}, {1.6, 1.2, 1}, {0.0, -0.9, 0});
    auto f = band_limited_input(fg, 3, 5, 11);
    auto rep = verify_A_summation_by_parts(A, f, 5, xg);
    CHECK(rep.direct_l1 > 1e-3);
    CHECK(rep.relative_l1_diff <= 1e-8);
    // a smooth bump carries energy below 2^{k_min}
    auto bump = GriddedFunction::sample(fg, [](const Vec& x) { return Complex(std::exp(-20 * x.squaredNorm())); });
    CHECK_THROWS_AS(verify_A_summation_by_parts(A, bump, 5, xg), PreconditionError);
    CHECK_THROWS_AS(verify_A_summation_by_parts(A, f, 3, xg), PreconditionError);
    CHECK_THROWS_AS(band_limited_input(fg, 3, 4, 1), PreconditionError);
}

TEST_CASE("A on gridded input is stable under refinement") {
    AveragingSpec A = halfwave_spec(3, 5);
    const GridSpec fg = GridSpec::cube(2, 512, 4.0);
    auto f = band_limited_input(fg, 3, 5, 2);
    const double fl = f.l1();
    AOptions coarse, fine;
    fine.leaf_scale = 0.5;
    auto a = apply_A(A, f, GridSpec::box(2, {64, 64, 1}, {2.0, 2.0, 1}, {0, -1.0, 0}), coarse);
    auto b = apply_A(A, f, GridSpec::box(2, {128, 128, 1}, {2.0, 2.0, 1}, {0, -1.0, 0}), fine);
    const double ra = a.values.l1() / fl, rb = b.values.l1() / fl;
    CHECK(ra > 0.01);
    CHECK(std::abs(ra - rb) <= 0.02 * rb);
    CHECK(a.values.l1() <= a.minkowski_bound * (1 + 1e-12));
    // pullbacks leaving f's box
    auto small = band_limited_input(GridSpec::cube(2, 256, 1.0), 3, 5, 4, 0.3);
    CHECK_THROWS_AS(apply_A(A, small, GridSpec::box(2, {16, 16, 1}, {1.0, 1.0, 1}, {0.0, -1.0, 0})), DomainError);
}

TEST_CASE("pseudodifferential symbol from the half-wave quotient") {
    auto ph = make_phase("halfwave", 2);
    auto a = standard(2);
    AveragingSpec A = halfwave_spec(4, 10);
    PseudoSymbol s(ph, a, A, a->omega_radius());
    CHECK(s.x_separable());
    const Vec x = vec2(0.2, -0.1);
    for (double w : {-0.2, 0.0, 0.13}) {
        const Vec xi = 300.0 * lift(Vec::Constant(1, w));
        // grad_x Phi = xi for the half-wave phase
        const Complex want = std::sqrt(300.0) * a->eval(x, xi) / A.weight(x, Vec::Constant(1, w));
        CHECK(std::abs(s.eval(x, xi) - want) <= 1e-10 * std::abs(want));
        CHECK(std::abs(build_s(ph, a, A, x, xi) - want) <= 1e-10 * std::abs(want));
    }
    CHECK(s.in_support_image(x, vec2(0.1, 1.0)));
    CHECK_FALSE(s.in_support_image(x, vec2(0.5, 1.0)));
    CHECK(s.eval(x, vec2(150.0, 300.0)) == 0.0);
    CHECK(s.eval(x, vec2(0.0, -300.0)) == 0.0);

    SymbolBoundsOptions so;
    so.samples = 100;
    so.domain.x_half_width = 0.9;
    so.domain.omega_max = 0.2;
    auto rep = verify_symbol_bounds(s, so);
    CHECK(rep.violations == 0);

    // a weight narrower than a's cone cannot divide it out
    AveragingSpec narrow = A;
    narrow.omega_max = 0.1;
    PseudoSymbol bad(ph, a, narrow, a->omega_radius());
    CHECK_THROWS_AS(bad.eval(x, 300.0 * lift(Vec::Constant(1, 0.22))), PreconditionError);
}

TEST_CASE("inversion failure inside the support image is a consistency error") {
    auto bad = std::make_shared<const MisreportedPhase>();
    auto a = std::make_shared<const ConstantSymbol>(2, 1.0);
    AveragingSpec A;
    A.phase = bad;
    PseudoSymbol s(bad, a, A, 0.25);
    CHECK_FALSE(s.x_separable());
    CHECK(s.in_support_image(vec2(0.1, 0.1), vec2(10.0, 50.0)));
    CHECK_THROWS_AS(s.eval(vec2(0.1, 0.1), vec2(10.0, 50.0)), ConsistencyError);
    // off the image the inversion failure only means s = 0
    CHECK_FALSE(s.in_support_image(vec2(0.1, 0.1), vec2(-30.0, 50.0)));
    CHECK(s.eval(vec2(0.1, 0.1), vec2(-30.0, 50.0)) == 0.0);
}

TEST_CASE("S by FFT agrees with the direct quadrature") {
    auto ph = make_phase("halfwave", 2);
    auto a = standard(2);
    AveragingSpec A = halfwave_spec(4, 10);
    PseudoSymbol s(ph, a, A, a->omega_radius());
    const GridSpec g = GridSpec::cube(2, 64, 1.0);
    auto in = GriddedFunction::sample(g, [](const Vec& x) {
        return std::exp(-30 * (x - vec2(0.05, 0.0)).squaredNorm()) * cis(12.0 * x(1) + 1.0 * x(0));
    });
    auto fast = apply_S(s, in, Exec::serial);
    auto slow = apply_S_direct(s, in, Exec::parallel);
    // half-wave: zeta = xi, s = |xi_n|^{1/2} a / varphi
    const Spectrum sp = forward_fft(in);
    GriddedFunction ref(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec x = g.point(i);
        Complex acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const Vec xi = g.frequency(j);
            if (!(xi(1) > 0)) continue;
            const Vec om = Vec::Constant(1, xi(0) / xi(1));
            const double vp = A.weight(x, om);
            if (vp == 0.0) continue;
            acc += std::sqrt(xi(1)) * a->eval(x, xi) / vp * sp.coeffs[j] * cis(x.dot(xi));
        }
        ref.values[i] = acc;
    }
    double err = 0.0, derr = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        err = std::max(err, std::abs(fast.values[i] - ref.values[i]));
        derr = std::max(derr, std::abs(slow.values[i] - ref.values[i]));
    }
    CHECK(ref.linf() > 0.01);
    CHECK(err <= 1e-10 * ref.linf());
    CHECK(derr <= 1e-10 * ref.linf());
    CHECK_THROWS_AS(apply_S_direct(s, in, Exec::serial, 1e5), ResourceError);
}

TEST_CASE("E at small k: partial sums, serial and parallel") {
    auto ph = make_phase("halfwave", 2);
    OperatorSpec op{ph, standard(2), 0.25, 4, 5, OperatorVariant::nondeg};
    AveragingSpec A = halfwave_spec(4, 5);
    EOptions eo;
    auto r = apply_E(op, A, vec2(0.0, 1.0), eo);
    REQUIRE(r.partial.size() == 2);
    CHECK(r.partial[0].first == 4);
    CHECK(r.l1 == r.partial.back().second);
    CHECK(r.l1 > 0.0);
    // the factorization removes most of T
    CHECK(r.l1 < 0.2 * r.t_l1);
    CHECK(r.leakage <= eo.leak_tolerance);
    eo.a.exec = Exec::serial;
    auto s = apply_E(op, A, vec2(0.0, 1.0), eo);
    CHECK(std::abs(s.l1 - r.l1) <= 1e-12 * r.l1);

    op.variant = OperatorVariant::full;
    CHECK_THROWS_AS(apply_E(op, A, vec2(0.0, 1.0)), PreconditionError);
    op.variant = OperatorVariant::nondeg;
    eo.max_points = 1e4;
    CHECK_THROWS_AS(apply_E(op, A, vec2(0.0, 1.0), eo), ResourceError);
}

TEST_CASE("W: nested integral against the collapsed and leading forms") {
    auto a = standard(2);
    AveragingSpec A = halfwave_spec(4, 10);
    PseudoSymbol s(A.phase, a, A, a->omega_radius());
    const Vec x = vec2(0.1, 0.05);
    const Vec xp = 64.0 * lift(Vec::Constant(1, 0.07));
    auto w = compute_W_pair(A, s, x, 6, Vec::Zero(2), xp);
    CHECK(std::abs(w.W - w.W_collapsed) <= 0.01 * std::abs(w.W));
    CHECK(w.tail_estimate <= 0.01 * std::abs(w.W));
    CHECK(std::abs(w.W - w.W0) <= 0.05 * std::abs(w.W0));
    CHECK(w.r_zeta == doctest::Approx(std::exp2(0.5 * 6 + 0.5 * 6)));
    CHECK_THROWS_AS(compute_W_pair(A, s, x, 8, Vec::Zero(2), xp), PreconditionError);

    // a = 0
    auto zero = std::make_shared<const ConstantSymbol>(2, 0.0);
    PseudoSymbol s0(A.phase, zero, A, 0.25);
    WOptions wo;
    wo.estimate_tail = false;
    auto w0 = compute_W_pair(A, s0, x, 4, Vec::Zero(2), 16.0 * lift(Vec::Constant(1, 0.07)), wo);
    CHECK(w0.W == 0.0);
    CHECK(w0.W0 == 0.0);
}
