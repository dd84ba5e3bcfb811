#pragma once

#include "fiolab/decomposition.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace fiolab {

// flat INI: [run] [phase] [symbol] [grid] [scales] [samples]; unknown keys are rejected
struct RunConfig {
    // [run]
    std::string experiment;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    int threads = 0;  // 0: machine parallelism
    bool plots = false;
    // [phase]; every other key is a phase parameter
    std::string phase = "halfwave";
    std::map<std::string, double> phase_params;
    // [symbol]
    double order = -0.5;
    double spatial_plateau = 0.5;
    int symbol_k_min = 3;
    double omega_max = 0.25;
    // [grid]
    int n = 2;
    int N = 256;
    double L = 4.0;
    // [scales]
    double eps = 0.25;
    int k_min = 4;
    int k_max = 10;
    // [samples]
    int samples = 1000;
    int y_count = 9;
    int z_count = 5;
    int inputs = 5;

    // UsageError listing every bad field
    void validate() const;
    std::string to_ini() const;
    static RunConfig from_ini(const std::string& text);
    static RunConfig load(const std::string& path);
    // the configuration the acceptance thresholds were set for
    static RunConfig defaults(const std::string& experiment);
    // FNV-1a of to_ini(), hex
    std::string hash() const;

    PhasePtr make_phase() const;
    SymbolPtr make_symbol() const;

    bool operator==(const RunConfig&) const = default;
};

const std::vector<std::string>& experiment_names();

struct ResultTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::string path;  // set once written
};

struct ThresholdCheck {
    std::string name;
    double value = 0.0;
    std::string comparison;  // "<=", "<", ">=", ">", "=="
    double threshold = 0.0;
    bool pass = false;
};

struct FitSummary {
    std::string name;
    DecayFit fit;
};

struct ExperimentReport {
    std::string experiment;
    std::string config_hash;
    std::vector<ResultTable> tables;
    std::vector<FitSummary> fits;
    std::vector<ThresholdCheck> checks;
    std::vector<std::string> plots;
    bool pass = false;
    double seconds = 0.0;
    long long tasks = 0;
};

// an error from a module, with the experiment that raised it
class ExperimentError : public Error {
public:
    enum class Kind { usage, resource, failure };
    ExperimentError(const std::string& what, Kind kind) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// computes the experiment without touching the filesystem
ExperimentReport execute(const RunConfig& config);
// execute, then write <out>/<experiment>/<table>.csv, optional svg plots and <out>/manifest.json
ExperimentReport run(const RunConfig& config);

struct WeakTypeRow {
    int N = 0;
    double h = 0.0;
    double l1 = 0.0;
    double weak = 0.0;           // sup over the ladder of lambda |{|Tf| > lambda}|
    int weak_exponent = 0;       // j with lambda = 2^j attaining it
    std::vector<double> distribution;  // |{|Tf| > 2^j}|, j = -10..20
};

struct WeakTypeProbe {
    double order = 0.0;
    std::vector<WeakTypeRow> rows;
    DecayFit l1_fit;            // series (log2 N, l1); slope is d l1 / d log2 N
    double l1_log_slope = 0.0;
    double weak_spread = 0.0;   // max/min - 1 over the rows
    double l1_spread = 0.0;
    bool chebyshev = true;      // weak <= l1 in every row
    bool monotone = true;       // every distribution is non-increasing
};

inline constexpr int kLadderLo = -10;
inline constexpr int kLadderHi = 20;

// Tf for f a unit-mass delta at 0 and the multiplier e^{2 pi i phi(xi)} (1+|xi|^2)^{order/2} on cube(n, N, L),
// rolled off radially between nu/2 and the lattice Nyquist nu; translation-invariant phases only
WeakTypeProbe weak_type_probe(const PhaseFunction& phase, double L, double order, const std::vector<int>& resolutions,
                              double max_points = 1.2e8);
// same ladder, any multiplier
WeakTypeRow weak_type_row(const GridSpec& g, const std::function<Complex(const Vec&)>& multiplier);

// hat(sigma)(xi) = c_+ |xi|^{-(n-1)/2} e^{2 pi i |xi|} + c_- |xi|^{-(n-1)/2} e^{-2 pi i |xi|} + ...
// for the unit circle, fitted over |xi| in [r_lo, r_hi]
struct SphereFit {
    Complex c_plus, c_minus;
    double relative_residual = 0.0;
    int points = 0;
};
SphereFit fit_sphere_constants(double r_lo, double r_hi, int points);

}  // namespace fiolab
