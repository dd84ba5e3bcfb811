#include "doctest.h"

#include "fiolab/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

using namespace fiolab;

TEST_CASE("grid preconditions and indexing") {
    CHECK_THROWS_AS(GridSpec::cube(2, 100, 8.0), PreconditionError);
    CHECK_THROWS_AS(GridSpec::cube(2, 32, 8.0), PreconditionError);
    CHECK_THROWS_AS(GridSpec::cube(2, 4096, 8.0), PreconditionError);
    CHECK_THROWS_AS(GridSpec::cube(4, 64, 8.0), PreconditionError);
    auto g = GridSpec::cube(2, 64, 8.0);
    CHECK(g.size() == 4096);
    CHECK(g.nyquist(0) == 4.0);
    CHECK(g.point(0)(0) == -4.0);
    CHECK(g.point(g.flatten({32, 32, 0})).norm() == 0.0);
    for (std::size_t f : {std::size_t(0), std::size_t(77), std::size_t(4095)}) CHECK(g.flatten(g.unflatten(f)) == f);
    CHECK(g.frequency(g.flatten({1, 63, 0}))(1) == doctest::Approx(-1.0 / 8.0));
    CHECK(g.nearest(vec2(0.01, -0.01)) == g.flatten({32, 32, 0}));
}

TEST_CASE("FFT round trip and continuous normalisation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (auto g : {GridSpec::cube(2, 64, 5.0), GridSpec::box(3, {8, 16, 32}, {1.0, 2.0, 3.0}, {0.3, -0.2, 0.1})}) {
        GriddedFunction f(g);
        for (auto& v : f.values) v = Complex(nd(rng), nd(rng));
        auto back = inverse_fft(forward_fft(f));
        double err = 0;
        for (std::size_t i = 0; i < f.values.size(); ++i) err = std::max(err, std::abs(back.values[i] - f.values[i]));
        CHECK(err <= 1e-12 * f.linf());
    }
    // Gaussian exp(-pi |x - c|^2) has transform exp(-pi |xi|^2) exp(-2 pi i c.xi)
    auto g = GridSpec::box(2, {128, 64}, {12.0, 10.0}, {0.5, -0.25});
    const Vec c = vec2(0.7, -0.4);
    auto f = GriddedFunction::sample(g, [&](const Vec& x) { return Complex(std::exp(-kPi * (x - c).squaredNorm())); });
    auto s = forward_fft(f);
    double err = 0;
    for (std::size_t j = 0; j < s.coeffs.size(); ++j) {
        const Vec xi = g.frequency(j);
        const Complex want = std::exp(-kPi * xi.squaredNorm()) * cis(-c.dot(xi));
        err = std::max(err, std::abs(s.coeffs[j] - want));
    }
    CHECK(err < 1e-12);
    // Plancherel
    double e2 = 0;
    for (auto& v : s.coeffs) e2 += std::norm(v);
    e2 /= (12.0 * 10.0);
    CHECK(std::sqrt(e2) == doctest::Approx(f.l2()).epsilon(1e-12));
}

TEST_CASE("delta approximant has unit mass") {
    for (int N : {64, 128, 256, 1024}) {
        for (double L : {8.0, 3.0, 7.3}) {
            auto g = GridSpec::cube(2, N, L);
            DeltaApproximant d(vec2(0.013, -0.2), g);
            CHECK(d.to_function().l1() == 1.0);
            CHECK(g.contains(d.support_point()));
            CHECK((d.support_point() - d.z).cwiseAbs().maxCoeff() <= 0.5 * g.h(0) + 1e-15);
        }
    }
    auto g = GridSpec::cube(2, 64, 8.0);
    CHECK_THROWS_AS(DeltaApproximant(vec2(5.0, 0.0), g), DomainError);
}

TEST_CASE("FIOG round trip and header layout") {
    auto g = GridSpec::cube(2, 64, 8.0);
    auto f = GriddedFunction::sample(g, [](const Vec& x) { return Complex(x(0), -x(1) * x(1)); });
    const std::string path = "test_grid_roundtrip.fiog";
    write_fiog(path, f);
    auto h = read_fiog(path);
    CHECK(h.grid == f.grid);
    CHECK(h.values == f.values);
    std::ifstream in(path, std::ios::binary);
    unsigned char hdr[32];
    in.read(reinterpret_cast<char*>(hdr), 32);
    CHECK(std::string(reinterpret_cast<char*>(hdr), 4) == "FIOG");
    CHECK(hdr[4] == 1);
    CHECK(hdr[8] == 2);
    CHECK(hdr[12] == 64);
    CHECK(hdr[13] == 0);
    double L;
    std::memcpy(&L, hdr + 16, 8);
    CHECK(L == 8.0);
    std::remove(path.c_str());
    auto off = GridSpec::box(2, {64, 64}, {8.0, 8.0}, {1.0, 0.0});
    CHECK_THROWS_AS(write_fiog(path, GriddedFunction(off)), PreconditionError);
    {
        std::ofstream bad("test_grid_bad.fiog", std::ios::binary);
        bad << "NOPE and some more bytes to pass the length check.";
    }
    CHECK_THROWS_AS(read_fiog("test_grid_bad.fiog"), DataError);
    std::remove("test_grid_bad.fiog");
}
