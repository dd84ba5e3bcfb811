#include "doctest.h"

#include "fiolab/phase_geometry.hpp"

#include <cmath>

using namespace fiolab;

namespace {

std::vector<PhasePtr> all_phases() {
    std::vector<PhasePtr> out;
    for (int n : {2, 3}) {
        out.push_back(make_phase("halfwave", n));
        out.push_back(make_phase("linear", n));
        out.push_back(make_phase("cusp", n));
        out.push_back(make_phase("varcoef", n));
        out.push_back(make_phase("varcoef", n, {{"gamma", 0.3}}));
    }
    out.push_back(make_phase("saddle", 3));
    return out;
}

}  // namespace

TEST_CASE("eval_phase examples") {
    auto hw = make_phase("halfwave", 2);
    CHECK(eval_phase(*hw, vec2(0, 0), FrequencyPoint(vec2(0, 1))) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(eval_phase(*hw, vec2(1, 0), FrequencyPoint(vec2(1, 2))) ==
          doctest::Approx(1.0 + std::sqrt(5.0)).epsilon(1e-14));
    auto cusp = make_phase("cusp", 2);
    const Vec xi = vec2(0.1, 1.0);
    const Vec x = vec2(0.3, -0.2);
    CHECK(eval_phase(*cusp, x, FrequencyPoint(2.0 * xi)) ==
          doctest::Approx(2.0 * eval_phase(*cusp, x, FrequencyPoint(xi))).epsilon(1e-14));
    // projective consistency
    const double lam = 37.0;
    CHECK(eval_phase(*cusp, x, FrequencyPoint::projective(lam, Vec::Constant(1, 0.1))) ==
          doctest::Approx(lam * cusp->eval_omega(x, Vec::Constant(1, 0.1))).epsilon(1e-12));
    CHECK_THROWS_AS(eval_phase(*hw, vec2(0, 0), FrequencyPoint(vec2(0, -1))), DomainError);
    CHECK_THROWS_AS(eval_phase(*hw, vec2(0, 0), FrequencyPoint(vec2(2, 1))), DomainError);
}

TEST_CASE("curvature examples") {
    auto hw = make_phase("halfwave", 2);
    CHECK(curvature_J(*hw, vec2(0.3, 0.1), Vec::Zero(1)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(curvature_J(*hw, vec2(0, 0), Vec::Ones(1)) == doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-14));
    auto lin = make_phase("linear", 2);
    CHECK(curvature_J(*lin, vec2(0.5, 0.5), Vec::Constant(1, 0.2)) == 0.0);
    // closed form vs finite differences
    for (const auto& p : all_phases()) {
        auto fd = make_phase(p->name(), p->dim(), p->parameters(), DerivativeMode::finite_difference);
        for (double w : {-0.2, 0.0, 0.13}) {
            Vec om = Vec::Constant(p->dim() - 1, w);
            Vec x = Vec::Constant(p->dim(), 0.3);
            CHECK(std::abs(curvature_J(*p, x, om) - curvature_J(*fd, x, om)) < 1e-6);
        }
    }
}

TEST_CASE("build_Q examples") {
    Mat H(1, 1);
    H << 1.0;
    // 2^{-eps k} = 1/4
    auto c = build_Q_from_hessian(H, 8, 0.25);
    CHECK(c.Q(0, 0) == doctest::Approx(std::sqrt(5.0) / 2.0).epsilon(1e-14));
    H << 0.0;
    c = build_Q_from_hessian(H, 8, 0.25);
    CHECK(c.Q(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c.mu_indeterminate);
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = 1.0;
    D(1, 1) = -1.0;
    c = build_Q_from_hessian(D, 8, 0.25);
    CHECK(c.Q(0, 0) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-14));
    CHECK(c.Q(1, 1) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-14));
    CHECK(std::abs(c.Q(0, 1)) < 1e-14);
    CHECK(c.mu == 0);
    Mat bad(2, 2);
    bad << 1.0, 0.5, 0.1, 1.0;
    CHECK_THROWS_AS(build_Q_from_hessian(bad, 8, 0.25), InternalError);
}

TEST_CASE("Q domination and eigenvalue floor") {
    Halton h(6, 3);
    for (const auto& p : all_phases()) {
        const int n = p->dim();
        for (int s = 0; s < 200; ++s) {
            auto u = h.next();
            auto smp = sample_cone(u, n, 0.25, 8, 1024);
            const int k = 4 + s % 8;
            auto c = build_Q(*p, smp.x, smp.omega, k, 0.25);
            Vec z(n - 1);
            for (int i = 0; i < n - 1; ++i) z(i) = 2 * u[4 + i] - 1;
            const double qz = z.dot(c.Q * z);
            CHECK(qz >= std::abs(z.dot(c.hessian * z)) - 1e-12);
            CHECK(qz >= std::exp2(-0.25 * k) * z.squaredNorm() - 1e-12);
            CHECK(c.q_eigenvalues.minCoeff() >= std::exp2(-0.125 * k) * (1 - 1e-12));
            if (c.J != 0.0 && !c.mu_indeterminate) CHECK(std::abs(c.mu) % 2 == (n - 1) % 2);
        }
    }
}

TEST_CASE("homogeneity, Euler and FD agreement over the cone") {
    Halton h(5, 9);
    for (const auto& p : all_phases()) {
        auto fd = make_phase(p->name(), p->dim(), p->parameters(), DerivativeMode::finite_difference);
        const int n = p->dim();
        double worst_h = 0, worst_e = 0, worst_fd = 0;
        for (int s = 0; s < 1000; ++s) {
            auto smp = sample_cone(h.next(), n, 0.25, 8, 4096);
            const Vec xi = smp.xi();
            const double f = p->eval(smp.x, xi);
            const double scale = std::max(std::abs(f), 1e-300);
            for (double t : {0.5, 2.0, 7.0})
                worst_h = std::max(worst_h, std::abs(p->eval(smp.x, t * xi) - t * f) / (t * scale));
            worst_e = std::max(worst_e, std::abs(xi.dot(p->grad_xi(smp.x, xi)) - f) / scale);
            const Vec g = p->grad_x(smp.x, xi);
            worst_fd = std::max(worst_fd, (g - fd->grad_x(smp.x, xi)).norm() / g.norm());
            const Mat H = p->hess_omega(smp.x, smp.omega);
            worst_fd = std::max(worst_fd, (H - fd->hess_omega(smp.x, smp.omega)).norm() / std::max(1.0, H.norm()));
        }
        INFO(p->name(), " n=", n);
        CHECK(worst_h <= 1e-8);
        CHECK(worst_e <= 1e-8);
        CHECK(worst_fd <= 1e-6);
    }
}

TEST_CASE("gradient inversion") {
    auto lin = make_phase("linear", 2);
    const Vec zeta = vec2(3.0, 40.0);
    auto r = invert_grad_x(*lin, vec2(0.1, 0.2), zeta);
    CHECK((r.cartesian() - zeta).norm() == 0.0);

    Halton h(5, 21);
    for (const auto& p : all_phases()) {
        double worst = 0.0;
        for (int s = 0; s < 1000; ++s) {
            auto smp = sample_cone(h.next(), p->dim(), 0.25, 8, 4096);
            const Vec xs = smp.xi();
            const Vec z = p->grad_x(smp.x, xs);
            auto got = invert_grad_x(*p, smp.x, z);
            worst = std::max(worst, (got.cartesian() - xs).norm() / xs.norm());
        }
        INFO(p->name());
        CHECK(worst <= 1e-8);
    }

    // cone violation after convergence
    auto cusp = make_phase("cusp", 2);
    CHECK_THROWS_AS(invert_grad_x(*cusp, vec2(0, 0), vec2(30.0, 10.0)), DomainError);
    // a gradient map whose image misses the probe: grad_x = xi + (2,0)|xi| never has xi_1-component
    // below... direction (-3, 1) is not reached from the cone
    auto strong = make_phase("varcoef", 2, {{"b_1", 2.0}, {"b_2", 0.0}});
    bool failed = false;
    double residual = 0.0;
    try {
        invert_grad_x(*strong, vec2(0, 0), vec2(-30.0, 10.0));
    } catch (const InversionFailure& e) {
        failed = true;
        residual = e.residual();
    } catch (const DomainError&) {
        failed = true;
        residual = 1.0;
    }
    CHECK(failed);
    CHECK(residual > 0.0);
}

TEST_CASE("validate_phase reports") {
    ConeSpec cone{8.0, 0.25};
    auto hw = validate_phase(*make_phase("halfwave", 2), cone, 200);
    CHECK(hw.min_mixed_det == doctest::Approx(1.0));
    CHECK(hw.max_mixed_det == doctest::Approx(1.0));
    CHECK(hw.min_grad_ratio == doctest::Approx(1.0));
    CHECK(hw.max_grad_ratio == doctest::Approx(1.0));
    auto lin = validate_phase(*make_phase("linear", 2), cone, 200);
    CHECK(lin.min_mixed_det == doctest::Approx(1.0));
    CHECK(lin.max_grad_ratio == doctest::Approx(1.0));
    auto cusp = validate_phase(*make_phase("cusp", 2), cone, 200);
    CHECK(cusp.min_mixed_det > 0.0);
    CHECK(cusp.max_euler_residual < 1e-9);
    CHECK(cusp.max_inversion_residual < 1e-8);
}

TEST_CASE("registry rejects unknown names and parameters") {
    CHECK_THROWS_AS(make_phase("nope", 2), UsageError);
    CHECK_THROWS_AS(make_phase("halfwave", 2, {{"amp", 1.0}}), UsageError);
    CHECK_THROWS_AS(make_phase("saddle", 2), Error);
}
