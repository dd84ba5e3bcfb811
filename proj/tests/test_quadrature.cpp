#include "doctest.h"

#include "fiolab/cutoffs.hpp"
#include "fiolab/quadrature.hpp"

#include <chrono>
#include <cmath>

using namespace fiolab;

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    for (int n : {1, 2, 5, 16, 24}) {
        const auto& g = gauss_legendre(n);
        for (int p = 0; p < 2 * n; ++p) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.nodes[i], p);
            const double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
            CHECK(s == doctest::Approx(exact).epsilon(1e-13).scale(1.0));
        }
    }
}

TEST_CASE("full periods integrate to zero, zero amplitude to exactly zero") {
    OscIntegralSpec s;
    s.dim = 1;
    s.lo = Vec::Zero(1);
    s.hi = Vec::Ones(1);
    s.phase = [](const Vec& t) { return 8.0 * t(0); };
    s.amplitude = [](const Vec&) { return Complex(1.0); };
    s.oscillation_scale = 8.0;
    auto r = oscillatory_quadrature(s, 6);
    CHECK(std::abs(r.value) < 1e-10);
    s.amplitude = [](const Vec&) { return Complex(0.0); };
    r = oscillatory_quadrature(s, 6);
    CHECK(r.value == Complex(0.0));
    CHECK_THROWS_AS(oscillatory_quadrature(s, 2), PreconditionError);
    OscOptions tiny;
    tiny.max_points = 10;
    CHECK_THROWS_AS(oscillatory_quadrature(s, 6, tiny), ResourceError);
}

namespace {

// int exp(pi i lambda t^2) a(t) dt with a Gaussian bump amplitude in d dims
Complex quad_gauss(int d, double lambda, const Mat& form) {
    OscIntegralSpec s;
    s.dim = d;
    const double R = std::sqrt(8.0);
    s.lo = Vec::Constant(d, -R);
    s.hi = Vec::Constant(d, R);
    s.phase = [&](const Vec& t) { return 0.5 * lambda * t.dot(form * t); };
    s.amplitude = [](const Vec& t) { return Complex(std::exp(-0.5 * t.squaredNorm()) * rho(t.squaredNorm() / 4.0)); };
    s.oscillation_scale = lambda * R * form.cwiseAbs().maxCoeff() * std::sqrt(double(d));
    s.amplitude_scale = 0.25;
    auto r = oscillatory_quadrature(s, 6);
    CHECK(r.reliable);
    return r.value;
}

}  // namespace

TEST_CASE("stationary phase reference examples") {
    Mat f(1, 1);
    f << 1.0;
    Complex v = stationary_phase_reference(f, 256.0, 1.0);
    CHECK(std::abs(v - std::pow(2.0, -4) * cis(1.0 / 8)) < 1e-15);
    f << -1.0;
    Complex w = stationary_phase_reference(f, 256.0, 1.0);
    CHECK(std::abs(w - std::conj(v)) < 1e-15);
    Mat d = Mat::Identity(2, 2);
    Complex u = stationary_phase_reference(d, 256.0, 1.0);
    CHECK(std::abs(u - std::pow(2.0, -8) * Complex(0, 1)) < 1e-15);
    Mat z = Mat::Zero(1, 1);
    CHECK_THROWS_AS(stationary_phase_reference(z, 256.0, 1.0), DomainError);
}

TEST_CASE("quadrature oracle matches stationary phase, error decreasing in lambda") {
    for (double sgn : {1.0, -1.0}) {
        Mat f(1, 1);
        f << sgn;
        double prev = 1e9;
        for (int j = 6; j <= 12; j += 2) {
            const double lam = std::exp2(j);
            const Complex q = quad_gauss(1, lam, f);
            const Complex ref = stationary_phase_reference(f, lam, 1.0);
            // closed form of the Gaussian integral as a second oracle
            const Complex exact = std::sqrt(Complex(kPi) / Complex(0.5, -kPi * lam * sgn));
            CHECK(std::abs(q - exact) < 1e-9 * std::abs(exact));
            const double rel = std::abs(q - ref) / std::abs(ref);
            if (j == 8) CHECK(rel <= 0.05);
            CHECK(rel < prev);
            prev = rel;
        }
    }
    // two dimensions, indefinite form
    Mat f(2, 2);
    f << 1.0, 0.0, 0.0, -1.0;
    const Complex q = quad_gauss(2, 32.0, f);
    const Complex ref = stationary_phase_reference(f, 32.0, 1.0);
    CHECK(std::abs(q - ref) / std::abs(ref) < 0.05);
}

TEST_CASE("radial profile transform against direct sums") {
    auto g = [](double t) { return eta_k(6, t) * std::pow(t, -0.5); };
    RadialProfileTransform T(2, g, 32.0, 128.0);
    // independent midpoint-rule oracle
    auto oracle = [&](double s) {
        const int M = 400000;
        const double h = 96.0 / M;
        Complex v = 0.0;
        for (int i = 0; i < M; ++i) {
            const double t = 32.0 + (i + 0.5) * h;
            v += t * g(t) * cis(t * s);
        }
        return v * h;
    };
    for (double s : {0.0, 0.003, -0.0117, 0.05, 0.21}) {
        const Complex want = oracle(s);
        CHECK(std::abs(T(s) - want) <= 1e-6 * std::abs(oracle(0.0)));
    }
    CHECK(T(T.cutoff() * 1.01) == Complex(0.0));
}

TEST_CASE("radial inverse transforms") {
    for (int n : {2, 3}) {
        const auto& e = eta0_inverse(n);
        const auto& p = phi0_inverse(n);
        // value at 0 is the integral of the profile over R^n
        const auto gl = composite_gauss_legendre(0.0, 2.0, 64, 16);
        double ip = 0, ie = 0;
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            const double t = gl.nodes[i];
            const double sa = (n == 2 ? kTwoPi * t : 4 * kPi * t * t) * gl.weights[i];
            ip += sa * rho(t);
            ie += sa * (rho(t) - rho(2 * t));
        }
        CHECK(p(0.0) == doctest::Approx(ip).epsilon(1e-6));
        CHECK(e(0.0) == doctest::Approx(ie).epsilon(1e-6));
        for (double r : {0.0, 0.37, 1.3, 4.1}) CHECK(std::abs(p(r) - p.direct(r)) < 1e-6 * p(0.0));
    }
    // brute-force 2-D transform of phi_0 at r = 0.7 along e_1
    OscIntegralSpec s;
    s.dim = 2;
    s.lo = Vec::Constant(2, -2.0);
    s.hi = Vec::Constant(2, 2.0);
    s.phase = [](const Vec& xi) { return 0.7 * xi(0); };
    s.amplitude = [](const Vec& xi) { return Complex(rho(xi.norm())); };
    s.oscillation_scale = 0.7;
    s.amplitude_scale = 0.05;
    auto q = oscillatory_quadrature(s, 8);
    CHECK(std::abs(q.value - phi0_inverse(2)(0.7)) < 1e-6);
}
