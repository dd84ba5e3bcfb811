#include "doctest.h"

#include "fiolab/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fiolab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fiolab_test_" + name);
    fs::remove_all(p);
    return p;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(FIOLAB_CLI) + " " + args + " > /dev/null 2>&1";
    const int s = std::system(cmd.c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

}  // namespace

TEST_CASE("config round-trips through the ini text") {
    for (const auto& e : experiment_names()) {
        const RunConfig c = RunConfig::defaults(e);
        CHECK_NOTHROW(c.validate());
        CHECK(RunConfig::from_ini(c.to_ini()) == c);
    }
    RunConfig c = RunConfig::defaults("e-l1");
    c.phase = "varcoef";
    c.phase_params = {{"b_1", 0.1 + 0.2}, {"b_2", -1.0 / 3.0}, {"gamma", 0.0}};
    c.eps = 0.1 * 3;
    c.L = 1e-3 / 7;
    c.seed = 18446744073709551615ull;
    c.plots = true;
    c.output_dir = "some/dir";
    const RunConfig back = RunConfig::from_ini(c.to_ini());
    CHECK(back == c);
    CHECK(back.hash() == c.hash());
    c.seed = 2;
    CHECK(back.hash() != c.hash());
}

TEST_CASE("config errors name the offending field") {
    const std::string good = RunConfig::defaults("phase-validate").to_ini();
    CHECK_THROWS_AS(RunConfig::from_ini(good + "\n[grid]\nM = 3\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::from_ini(good + "\n[extra]\nx = 1\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::from_ini("stray = 1\n" + good), UsageError);
    try {
        RunConfig::from_ini("[grid]\nN = many\n[scales]\neps = 0.2.1\n");
        FAIL("no error");
    } catch (const UsageError& e) {
        const std::string m = e.what();
        CHECK(m.find("grid.N") != std::string::npos);
        CHECK(m.find("scales.eps") != std::string::npos);
    }
    RunConfig c = RunConfig::defaults("phase-validate");
    c.N = 100;
    c.eps = 0.7;
    c.phase_params["amp"] = 2.0;
    try {
        c.validate();
        FAIL("no error");
    } catch (const UsageError& e) {
        const std::string m = e.what();
        CHECK(m.find("grid.N") != std::string::npos);
        CHECK(m.find("scales.eps") != std::string::npos);
        CHECK(m.find("amp") != std::string::npos);
    }
    c = RunConfig::defaults("phase-validate");
    c.experiment = "nope";
    try {
        execute(c);
        FAIL("no error");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("weak-type") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig::defaults("nope"), UsageError);
}

TEST_CASE("phase-validate on the half-wave phase passes") {
    auto r = execute(RunConfig::defaults("phase-validate"));
    CHECK(r.pass);
    REQUIRE(r.tables.size() == 1);
    const auto& row = r.tables[0].rows.at(0);
    // homogeneity, euler, inversion
    CHECK(row[5] < 1e-8);
    CHECK(row[6] < 1e-8);
    CHECK(row[9] < 1e-8);
    for (const auto& c : r.checks) CHECK(c.pass);
}

TEST_CASE("module errors carry the experiment context") {
    // the half-wave phase has no degenerate piece, so the decay series is all zeros
    RunConfig c = RunConfig::defaults("deg-decay");
    c.phase = "halfwave";
    c.k_max = 7;
    try {
        execute(c);
        FAIL("no error");
    } catch (const ExperimentError& e) {
        CHECK(e.kind() == ExperimentError::Kind::failure);
        CHECK(std::string(e.what()).find("deg-decay") != std::string::npos);
    }
    c = RunConfig::defaults("e-l1");
    c.k_max = 5;
    try {
        execute(c);
        FAIL("no error");
    } catch (const ExperimentError& e) {
        CHECK(e.kind() == ExperimentError::Kind::usage);
    }
    c = RunConfig::defaults("weak-type");
    c.phase = "varcoef";
    CHECK_THROWS_AS(execute(c), ExperimentError);
}

TEST_CASE("runs are deterministic and the manifest lists every threshold") {
    for (const char* e : {"stationarity-identities", "weak-type"}) {
        RunConfig c = RunConfig::defaults(e);
        c.samples = 200;
        c.N = 512;
        c.plots = true;
        const fs::path da = scratch("a"), db = scratch("b");
        c.output_dir = da.string();
        auto r1 = run(c);
        c.output_dir = db.string();
        auto r2 = run(c);
        CHECK(r1.pass == r2.pass);
        REQUIRE(r1.tables.size() == r2.tables.size());
        for (std::size_t i = 0; i < r1.tables.size(); ++i) {
            const auto a = slurp(da / r1.tables[i].path);
            const auto b = slurp(db / r2.tables[i].path);
            CHECK(!a.empty());
            CHECK(a == b);
        }
        const std::string m = slurp(fs::path(c.output_dir) / "manifest.json");
        for (const auto& chk : r2.checks) CHECK(m.find(chk.name) != std::string::npos);
        CHECK(m.find("damping_sign") != std::string::npos);
        CHECK(m.find(c.hash()) != std::string::npos);
        if (std::string(e) == "weak-type") {
            CHECK(!r2.plots.empty());
            for (const auto& p : r2.plots) CHECK(fs::exists(fs::path(c.output_dir) / p));
        }
    }
}

TEST_CASE("weak-type probe: Chebyshev, monotone distributions, divergent L1") {
    auto hw = make_phase("halfwave", 2);
    auto p = weak_type_probe(*hw, 4.0, -0.5, {128, 256, 512});
    CHECK(p.chebyshev);
    CHECK(p.monotone);
    for (const auto& r : p.rows) {
        CHECK(r.weak <= r.l1);
        CHECK(r.distribution.size() == std::size_t(kLadderHi - kLadderLo + 1));
    }
    CHECK(p.rows[2].l1 > p.rows[1].l1);
    CHECK(p.rows[1].l1 > p.rows[0].l1);
    CHECK(p.l1_log_slope > 1.0);
    CHECK(p.weak_spread <= 0.25);

    // smooth compactly supported multiplier: Schwartz kernel
    double lo = 1e300, hi = 0.0;
    for (int N : {128, 256, 512}) {
        auto r = weak_type_row(GridSpec::cube(2, N, 4.0), [](const Vec& xi) { return Complex(rho(xi.norm())); });
        CHECK(r.weak <= r.l1);
        lo = std::min(lo, r.l1);
        hi = std::max(hi, r.l1);
    }
    CHECK(hi / lo < 1.01);

    CHECK_THROWS_AS(weak_type_probe(*make_phase("varcoef", 2), 4.0, -0.5, {128, 256}), PreconditionError);
    CHECK_THROWS_AS(weak_type_probe(*make_phase("halfwave", 3), 4.0, -0.5, {128, 1024}), ResourceError);
}

TEST_CASE("circle constants from the two-term fit") {
    auto f = fit_sphere_constants(64.0, 256.0, 385);
    // J0 asymptotics: 2 pi J0(2 pi r) ~ r^{-1/2} (e^{-i pi/4} e^{2 pi i r} + e^{i pi/4} e^{-2 pi i r})
    CHECK(std::abs(f.c_plus - std::polar(1.0, -kPi / 4)) < 1e-3);
    CHECK(std::abs(f.c_minus - std::polar(1.0, kPi / 4)) < 1e-3);
    CHECK(f.relative_residual < 1e-3);
    // the fitted model against the Bessel function directly
    for (double r : {70.3, 150.0, 241.7}) {
        const Complex model = (f.c_plus * cis(r) + f.c_minus * cis(-r)) / std::sqrt(r);
        CHECK(std::abs(model.real() - kTwoPi * std::cyl_bessel_j(0.0, kTwoPi * r)) < 1e-3 / std::sqrt(r));
        CHECK(std::abs(model.imag()) < 1e-6);
    }
    CHECK_THROWS_AS(fit_sphere_constants(10.0, 5.0, 10), PreconditionError);
}

TEST_CASE("cli exit codes") {
    CHECK(cli("list-experiments") == 0);
    CHECK(cli("run --experiment nope") == 2);
    CHECK(cli("frobnicate") == 2);
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    {
        std::ofstream bad(dir / "bad.ini");
        bad << "[grid]\nN = 100\n";
    }
    CHECK(cli("validate --config " + (dir / "bad.ini").string()) == 2);
    RunConfig c = RunConfig::defaults("stationarity-identities");
    c.samples = 150;
    c.output_dir = (dir / "out").string();
    {
        std::ofstream good(dir / "good.ini");
        good << c.to_ini();
    }
    CHECK(cli("validate --config " + (dir / "good.ini").string()) == 0);
    CHECK(cli("run --config " + (dir / "good.ini").string()) == 0);
    CHECK(fs::exists(dir / "out" / "manifest.json"));
    CHECK(fs::exists(dir / "out" / "stationarity-identities" / "residuals.csv"));
    // an order -2 symbol decays, so the uniform-bound check fails
    c = RunConfig::defaults("nodecay-uniform");
    c.order = -2.0;
    c.k_max = 8;
    c.output_dir = (dir / "out2").string();
    {
        std::ofstream f(dir / "fail.ini");
        f << c.to_ini();
    }
    CHECK(cli("run --config " + (dir / "fail.ini").string()) == 1);
    // three dimensions at N = 1024 overflow the weak-type point budget
    c = RunConfig::defaults("weak-type");
    c.n = 3;
    c.output_dir = (dir / "out3").string();
    {
        std::ofstream f(dir / "big.ini");
        f << c.to_ini();
    }
    CHECK(cli("run --config " + (dir / "big.ini").string()) == 3);
}
