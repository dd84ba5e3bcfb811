#include "doctest.h"

#include "fiolab/cutoffs.hpp"
#include "fiolab/oscillatory.hpp"

#include <cmath>

using namespace fiolab;

namespace {

// |xi|^{-1/2} eta_0(|xi|)
class LowBandSymbol final : public SymbolFunction {
public:
    int dim() const override { return 2; }
    double order() const override { return -0.5; }
    Complex eval(const Vec&, const Vec& xi) const override {
        const double r = xi.norm();
        const double e = eta_k(0, r);
        return e == 0.0 ? 0.0 : e / std::sqrt(r);
    }
};

double rel_l2(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

PiecePtr full_piece(const PhasePtr& ph, int k) {
    auto a = std::make_shared<const StandardSymbol>(StandardSymbol::defaults(2));
    return std::make_shared<const DyadicSymbolPiece>(a, ph, k, 0.25, PieceKind::full);
}

}  // namespace

TEST_CASE("multiplier round trip, shift and band check") {
    auto g = GridSpec::cube(2, 64, 8.0);
    auto f = GriddedFunction::sample(g, [](const Vec& x) { return Complex(std::exp(-kPi * x.squaredNorm())); });
    auto same = apply_multiplier(f, [](const Vec&) { return Complex(1.0); }, false);
    CHECK(rel_l2(same.values, f.values) < 1e-13);
    CHECK_THROWS_AS(apply_multiplier(f, [](const Vec&) { return Complex(1.0); }), AliasingError);
    // translation by a: multiplier e^{-2 pi i a.xi}
    const Vec a = vec2(0.5, -0.25);
    auto g2 = GridSpec::cube(2, 128, 8.0);
    f = GriddedFunction::sample(g2, [](const Vec& x) { return Complex(std::exp(-kPi * x.squaredNorm())); });
    auto sh = apply_multiplier(f, [&](const Vec& xi) { return cis(-a.dot(xi)) * rho(xi.norm() / 3.0); });
    auto want = GriddedFunction::sample(g2, [&](const Vec& x) { return Complex(std::exp(-kPi * (x - a).squaredNorm())); });
    CHECK(rel_l2(sh.values, want.values) < 1e-10);
}

TEST_CASE("lattice FIO sum agrees with the multiplier for the half-wave phase") {
    auto g = GridSpec::cube(2, 64, 8.0);
    auto hw = make_phase("halfwave", 2);
    DeltaApproximant d(vec2(0.0, 0.0), g);
    LowBandSymbol s;
    auto direct = apply_fio(*hw, s, d.to_function());
    auto mult = apply_multiplier(d.to_function(), [&](const Vec& xi) { return s.eval(xi, xi) * cis(xi.norm()); });
    CHECK(rel_l2(direct.values, mult.values) < 1e-6);
    auto serial = apply_fio(*hw, s, d.to_function(), Exec::serial);
    CHECK(rel_l2(serial.values, direct.values) < 1e-14);
}

TEST_CASE("lattice FIO sum agrees with quadrature for a variable-coefficient phase") {
    auto g = GridSpec::cube(2, 128, 12.0);
    auto vc = make_phase("varcoef", 2, {{"b_1", 0.1}, {"b_2", 0.05}});
    const Vec xi0 = vec2(0.0, 2.0);
    const double sw = 1.5;
    auto f = GriddedFunction::sample(g, [&](const Vec& x) {
        return std::exp(-kPi * x.squaredNorm() / (sw * sw)) * cis(xi0.dot(x));
    });
    ConstantSymbol one(2, 1.0);
    auto Tf = apply_fio(*vc, one, f);
    double peak = 0;
    std::vector<Vec> probes{vec2(0.0, -1.0), vec2(0.3, -0.9), vec2(-0.5, -1.2), vec2(0.2, 0.0), vec2(1.0, -1.0)};
    std::vector<Complex> got, want;
    for (const Vec& x : probes) {
        const Vec xs = g.point(g.nearest(x));
        OscIntegralSpec spec;
        spec.dim = 2;
        spec.lo = vec2(-3.8, -1.8);
        spec.hi = vec2(3.8, 5.8);
        spec.phase = [&](const Vec& xi) { return vc->eval(xs, xi); };
        spec.amplitude = [&](const Vec& xi) {
            return Complex(sw * sw * std::exp(-kPi * sw * sw * (xi - xi0).squaredNorm()));
        };
        spec.oscillation_scale = 4.0;
        spec.amplitude_scale = 0.1;
        want.push_back(oscillatory_quadrature(spec, 8).value);
        got.push_back(Tf.values[g.nearest(x)]);
        peak = std::max(peak, std::abs(want.back()));
    }
    CHECK(peak > 0.05);
    for (std::size_t i = 0; i < probes.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6 * peak);
}

TEST_CASE("projective kernel evaluation against brute-force quadrature") {
    auto hw = make_phase("halfwave", 2);
    auto piece = full_piece(hw, 6);
    const Vec y = vec2(0.0, 0.7);
    ProjectiveKernel K(*hw, *piece, y);
    std::vector<Vec> probes{vec2(-0.05, -0.3), vec2(0.02, -0.31), vec2(0.1, -0.2)};
    double peak = 0;
    std::vector<Complex> got, want;
    for (const Vec& x : probes) {
        got.push_back(K(x));
        auto r = kernel_point_oracle(*hw, *piece, y, x, 8.0);
        CHECK(r.reliable);
        want.push_back(r.value);
        peak = std::max(peak, std::abs(r.value));
    }
    CHECK(peak > 1.0);
    for (std::size_t i = 0; i < probes.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-4 * peak);
}

TEST_CASE("multiplier, projective and direct kernel rows agree") {
    auto hw = make_phase("halfwave", 2);
    auto piece = full_piece(hw, 5);
    const Vec y = vec2(0.1, 0.7);
    KernelRowOptions mo;
    mo.method = KernelMethod::multiplier;
    auto row = kernel_row(*hw, *piece, y, mo);
    CHECK(row.method == KernelMethod::multiplier);
    CHECK(row.leakage <= mo.leak_tolerance);
    ProjectiveKernel K(*hw, *piece, y);
    const auto& g = row.values.grid;
    double peak = row.values.linf(), err = 0;
    for (std::size_t j = 0; j < g.size(); j += 997) err = std::max(err, std::abs(K(g.point(j)) - row.values.values[j]));
    CHECK(err <= 1e-4 * peak);

    // the direct lattice sum is the same discretisation as the FFT path
    auto small = full_piece(hw, 3);
    KernelRowOptions so;
    so.method = KernelMethod::multiplier;
    const auto box = GridSpec::box(2, {160, 160}, {4.0, 4.0}, {0.0, -0.3});
    auto r1 = kernel_row_on(*hw, *small, y, box, so);
    so.method = KernelMethod::direct;
    auto r2 = kernel_row_on(*hw, *small, y, box, so);
    CHECK(rel_l2(r2.values.values, r1.values.values) < 1e-10);
    so.exec = Exec::serial;
    auto r3 = kernel_row_on(*hw, *small, y, box, so);
    CHECK(rel_l2(r3.values.values, r2.values.values) < 1e-14);
}

TEST_CASE("change of variables path for a variable-coefficient phase") {
    auto vc = make_phase("varcoef", 2, {{"b_1", 0.1}, {"b_2", -0.05}});
    auto piece = full_piece(vc, 5);
    CHECK(multiplier_path_available(*vc, *piece));
    const Vec y = vec2(0.0, 0.6);
    auto row = kernel_row(*vc, *piece, y);
    CHECK(row.method == KernelMethod::multiplier);
    CHECK(row.leakage <= 1e-5);
    ProjectiveKernel K(*vc, *piece, y);
    const auto& g = row.values.grid;
    double err = 0;
    for (std::size_t j = 0; j < g.size(); j += 1009) err = std::max(err, std::abs(K(g.point(j)) - row.values.values[j]));
    CHECK(err <= 1e-4 * row.values.linf());
}

TEST_CASE("kernel L1 is insensitive to enlarging the box") {
    auto hw = make_phase("halfwave", 2);
    auto piece = full_piece(hw, 6);
    const Vec y = vec2(0.0, 0.7);
    auto row = kernel_row(*hw, *piece, y);
    const auto& g = row.values.grid;
    std::array<double, 3> L = g.L;
    std::array<int, 3> N = g.N;
    for (int i = 0; i < 2; ++i) {
        L[i] *= 1.5;
        N[i] = fft_friendly(static_cast<int>(std::ceil(N[i] * 1.5)));
    }
    auto big = kernel_row_on(*hw, *piece, y, GridSpec::box(2, N, L, g.center));
    CHECK(std::abs(big.l1() - row.l1()) <= 1e-3 * row.l1());
}
