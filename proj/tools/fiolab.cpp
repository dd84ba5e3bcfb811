#include "fiolab/harness.hpp"

#include <fmt/format.h>

#include "CLI11.hpp"

#include <cstdio>
#include <optional>

using namespace fiolab;

namespace {

constexpr int kPass = 0, kFail = 1, kUsage = 2, kResource = 3;

void print_report(const ExperimentReport& r) {
    for (const auto& c : r.checks)
        fmt::print("  [{}] {}: {:.6g} {} {:.6g}\n", c.pass ? "pass" : "FAIL", c.name, c.value, c.comparison, c.threshold);
    for (const auto& f : r.fits)
        fmt::print("  fit {}: slope {:.4f} +- {:.4f}\n", f.name, f.fit.slope, f.fit.slope_stderr);
    fmt::print("{} {} ({:.1f} s, {} tasks, config {})\n", r.experiment, r.pass ? "PASS" : "FAIL", r.seconds, r.tasks,
               r.config_hash);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fiolab: Fourier integral operator experiments"};
    app.require_subcommand(1);

    std::string config_path, experiment, out;
    std::optional<std::uint64_t> seed;
    bool plots = false;
    auto* run_cmd = app.add_subcommand("run", "run one experiment");
    run_cmd->add_option("--config", config_path, "INI config; without it the experiment's defaults are used");
    run_cmd->add_option("--experiment", experiment, "overrides run.experiment");
    run_cmd->add_option("--out", out, "overrides run.output_dir");
    run_cmd->add_option("--seed", seed, "overrides run.seed");
    run_cmd->add_flag("--plots", plots, "write svg plots next to the csv tables");

    app.add_subcommand("list-experiments", "print the experiment names");

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate", "check a config file");
    val_cmd->add_option("--config", validate_path)->required();

    std::string defaults_for;
    auto* def_cmd = app.add_subcommand("print-config", "print the default config of an experiment");
    def_cmd->add_option("--experiment", defaults_for)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kUsage;
    }

    try {
        if (app.got_subcommand("list-experiments")) {
            for (const auto& e : experiment_names()) fmt::print("{}\n", e);
            return kPass;
        }
        if (app.got_subcommand("print-config")) {
            fmt::print("{}", RunConfig::defaults(defaults_for).to_ini());
            return kPass;
        }
        if (app.got_subcommand("validate")) {
            const auto c = RunConfig::load(validate_path);
            c.validate();
            fmt::print("valid ({}, config {})\n", c.experiment.empty() ? "no experiment" : c.experiment, c.hash());
            return kPass;
        }
        RunConfig c;
        if (!config_path.empty()) {
            c = RunConfig::load(config_path);
        } else if (!experiment.empty()) {
            c = RunConfig::defaults(experiment);
        } else {
            throw UsageError("run needs --config or --experiment");
        }
        if (!experiment.empty()) c.experiment = experiment;
        if (!out.empty()) c.output_dir = out;
        if (seed) c.seed = *seed;
        if (plots) c.plots = true;
        const auto rep = run(c);
        print_report(rep);
        return rep.pass ? kPass : kFail;
    } catch (const UsageError& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return kUsage;
    } catch (const ExperimentError& e) {
        fmt::print(stderr, "{}\n", e.what());
        switch (e.kind()) {
            case ExperimentError::Kind::usage: return kUsage;
            case ExperimentError::Kind::resource: return kResource;
            default: return kFail;
        }
    } catch (const ResourceError& e) {
        fmt::print(stderr, "resource error: {}\n", e.what());
        return kResource;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kFail;
    }
}
