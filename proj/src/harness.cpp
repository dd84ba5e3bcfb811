#include "fiolab/harness.hpp"

#include "fiolab/factorization.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <omp.h>

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace fiolab {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

const std::vector<std::string> kExperiments = {
    "phase-validate", "psi-bounds",       "deg-decay",         "nodecay-uniform",         "tube-decay",
    "taylor-remainder", "a-l1",           "a-parts-identity",  "s-symbol-bounds",         "stationarity-identities",
    "w-diff-decay",   "e-l1",             "weak-type",         "model-log-divergence"};

bool known_experiment(const std::string& e) {
    return std::find(kExperiments.begin(), kExperiments.end(), e) != kExperiments.end();
}

std::string num(double v) { return fmt::format("{}", v); }

double parse_double(const std::string& field, const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw UsageError(fmt::format("config: {}: '{}' is not a number", field, s));
    }
    if (used != s.size()) throw UsageError(fmt::format("config: {}: '{}' is not a number", field, s));
    return v;
}

int parse_int(const std::string& field, const std::string& s) {
    const double v = parse_double(field, s);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError(fmt::format("config: {}: '{}' is not an integer", field, s));
    return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& field, const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError(fmt::format("config: {}: '{}' is not an unsigned integer", field, s));
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw UsageError(fmt::format("config: {}: '{}' out of range", field, s));
    }
}

bool parse_bool(const std::string& field, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw UsageError(fmt::format("config: {}: '{}' is not a boolean", field, s));
}

// --- report building ----------------------------------------------------------------

struct Builder {
    ExperimentReport rep;

    ResultTable& table(const std::string& name, std::vector<std::string> cols) {
        rep.tables.push_back({name, std::move(cols), {}, ""});
        return rep.tables.back();
    }
    void check(const std::string& name, double value, const std::string& cmp, double threshold) {
        bool ok = false;
        if (cmp == "<=") ok = value <= threshold;
        else if (cmp == "<") ok = value < threshold;
        else if (cmp == ">=") ok = value >= threshold;
        else if (cmp == ">") ok = value > threshold;
        else if (cmp == "==") ok = value == threshold;
        else throw InternalError("unknown comparison " + cmp);
        rep.checks.push_back({name, value, cmp, threshold, ok});
    }
    void fit(const std::string& name, const DecayFit& f) { rep.fits.push_back({name, f}); }
};

std::vector<std::pair<double, double>> series_of(const std::vector<int>& ks, const std::vector<double>& v) {
    std::vector<std::pair<double, double>> s;
    for (std::size_t i = 0; i < ks.size(); ++i) s.push_back({double(ks[i]), v[i]});
    return s;
}

double spread(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi / *lo;
}

std::vector<int> k_range(int lo, int hi, int step = 1) {
    std::vector<int> ks;
    for (int k = lo; k <= hi; k += step) ks.push_back(k);
    return ks;
}

AveragingSpec averaging(const RunConfig& c, const PhasePtr& ph) {
    AveragingSpec A;
    A.phase = ph;
    A.eps = c.eps;
    A.k_lo = c.k_min;
    A.k_hi = c.k_max;
    A.omega_max = c.omega_max;
    return A;
}

void push_vec(std::vector<double>& row, const Vec& v) {
    for (int i = 0; i < v.size(); ++i) row.push_back(v(i));
}

std::vector<std::string> coord_names(const std::string& p, int n) {
    std::vector<std::string> s;
    for (int i = 1; i <= n; ++i) s.push_back(p + std::to_string(i));
    return s;
}

template <class... Rest>
std::vector<std::string> cols(std::vector<std::string> a, Rest... rest) {
    (a.insert(a.end(), rest.begin(), rest.end()), ...);
    return a;
}

// --- experiments ----------------------------------------------------------------------

void exp_phase_validate(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    auto r = validate_phase(*ph, ConeSpec{8.0, c.omega_max}, c.samples, c.seed, c.k_max, c.eps);
    auto& t = b.table("residuals", {"samples", "min_mixed_det", "max_mixed_det", "min_grad_ratio", "max_grad_ratio",
                                    "homogeneity", "euler", "finite_difference", "q_domination", "inversion"});
    t.rows.push_back({double(r.samples), r.min_mixed_det, r.max_mixed_det, r.min_grad_ratio, r.max_grad_ratio,
                      r.max_homogeneity_residual, r.max_euler_residual, r.max_fd_residual, r.max_q_domination_violation,
                      r.max_inversion_residual});
    b.check("homogeneity residual", r.max_homogeneity_residual, "<=", 1e-8);
    b.check("euler residual", r.max_euler_residual, "<=", 1e-8);
    b.check("min mixed hessian determinant", r.min_mixed_det, ">", 0.0);
    b.check("inversion residual", r.max_inversion_residual, "<=", 1e-8);
    b.check("closed form vs finite differences", r.max_fd_residual, "<=", 1e-6);
    b.check("Q domination violation", r.max_q_domination_violation, "<=", 1e-10);
    b.rep.tasks = r.samples;
}

void exp_stationarity(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    auto r = verify_stationarity_identities(*ph, c.samples, c.seed, ConeSpec{8.0, c.omega_max});
    auto& t = b.table("residuals", {"samples", "gradient", "stationary_gradient", "hessian", "hessian_samples", "value"});
    t.rows.push_back({double(r.samples), r.max_gradient_residual, r.max_stationary_gradient, r.max_hessian_residual,
                      double(r.hessian_samples), r.max_value_residual});
    b.check("gradient identity", r.max_gradient_residual, "<=", 1e-8);
    b.check("gradient at omega = omega'", r.max_stationary_gradient, "<=", 1e-8);
    b.check("hessian identity", r.max_hessian_residual, "<=", 1e-8);
    b.check("phase value identity", r.max_value_residual, "<=", 1e-8);
    b.rep.tasks = r.samples;
}

void exp_psi_bounds(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    const int n = c.n;
    auto& t = b.table("ratio", {"k", "samples", "min_psi", "max_psi", "ratio"});
    for (int k : k_range(c.k_min, c.k_max)) {
        // nondegenerate support: the curvature cutoff is nonzero
        Halton h(2 * n, c.seed);
        std::vector<ConeSample> pts;
        long long tries = 0;
        while (static_cast<int>(pts.size()) < c.samples) {
            if (++tries > 100LL * c.samples)
                throw PreconditionError("psi-bounds: the nondegenerate support is (nearly) empty for this phase");
            auto s = sample_cone(h.next(), n, c.omega_max, 8, 16, 1.0);
            if (std::abs(curvature_J(*ph, s.x, s.omega)) < std::exp2(-c.eps * k - 1)) continue;
            pts.push_back(s);
        }
        std::vector<double> v(pts.size());
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < static_cast<long long>(pts.size()); ++i)
            v[i] = psi_average(*ph, pts[i].x, pts[i].omega, k, c.eps).value;
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        t.rows.push_back({double(k), double(v.size()), *lo, *hi, *hi / *lo});
        b.check(fmt::format("psi_x max/min at k = {}", k), *hi / *lo, "<=", 4.0);
        b.rep.tasks += static_cast<long long>(v.size());
    }
}

void exp_deg_decay(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    OperatorSpec op{ph, c.make_symbol(), c.eps, c.k_min, c.k_max, OperatorVariant::deg};
    const auto ys = sample_y(*ph, c.y_count, 0.25, c.seed);
    const auto ks = k_range(c.k_min, c.k_max);
    auto& t = b.table("series", cols({"y_index"}, coord_names("y", c.n), std::vector<std::string>{"k", "l1"}));
    auto& f = b.table("fits", cols({"y_index"}, coord_names("y", c.n), std::vector<std::string>{"slope", "intercept", "stderr"}));
    double worst_slope = -1e300, worst_err = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        std::vector<double> v;
        for (int k : ks) {
            v.push_back(deg_kernel_l1(op, k, ys[i]));
            std::vector<double> row{double(i)};
            push_vec(row, ys[i]);
            row.push_back(k);
            row.push_back(v.back());
            t.rows.push_back(row);
        }
        const auto fit = fit_decay_slope(series_of(ks, v));
        b.fit(fmt::format("y{}", i), fit);
        std::vector<double> row{double(i)};
        push_vec(row, ys[i]);
        row.insert(row.end(), {fit.slope, fit.intercept, fit.slope_stderr});
        f.rows.push_back(row);
        worst_slope = std::max(worst_slope, fit.slope);
        worst_err = std::max(worst_err, fit.slope_stderr);
        b.rep.tasks += static_cast<long long>(ks.size());
    }
    b.check("max fitted log2 slope over y", worst_slope, "<=", -0.1);
    b.check("max slope standard error over y", worst_err, "<", 0.05);
}

void exp_nodecay(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    OperatorSpec op{ph, c.make_symbol(), c.eps, c.k_min, c.k_max, OperatorVariant::full};
    const Vec y = kernel_center_y(*ph);
    const auto ks = k_range(c.k_min, c.k_max);
    auto& t = b.table("series", {"k", "l1"});
    std::vector<double> v;
    for (int k : ks) {
        v.push_back(nodecay_kernel_l1(op, k, y));
        t.rows.push_back({double(k), v.back()});
    }
    b.fit("l1", fit_decay_slope(series_of(ks, v)));
    b.check("max/min over k", spread(v), "<=", 4.0);
    b.rep.tasks = static_cast<long long>(ks.size());
}

std::vector<int> tube_ks(const RunConfig& c) { return k_range(c.k_min, c.k_max, 2); }

void exp_tube_decay(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    OperatorSpec op{ph, c.make_symbol(), c.eps, c.k_min, c.k_max, OperatorVariant::nondeg};
    const Vec y = kernel_center_y(*ph);
    auto& t = b.table("tube", {"k", "l1", "normalized", "disk_fraction", "leakage"});
    std::vector<double> norm, disk;
    for (int k : tube_ks(c)) {
        TubePiece tube(op.piece(k), Vec::Zero(c.n - 1), Vec::Zero(c.n));
        auto r = tube_kernel_l1(*ph, tube, y);
        t.rows.push_back({double(k), r.l1, r.normalized, r.disk_fraction, r.leakage});
        norm.push_back(r.normalized);
        disk.push_back(r.disk_fraction);
    }
    if (norm.size() < 2) throw PreconditionError("tube-decay: need at least two scales");
    b.check("normalized tube norm max/min", spread(norm), "<=", 4.0);
    b.check("min disk fraction", *std::min_element(disk.begin(), disk.end()), ">=", 0.9);
    b.rep.tasks = static_cast<long long>(norm.size());
}

void exp_taylor(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    OperatorSpec op{ph, c.make_symbol(), c.eps, c.k_min, c.k_max, OperatorVariant::nondeg};
    auto& t = b.table("remainder", {"k", "samples", "max_abs", "max_lambda_abs", "max_leading_dev"});
    double lam = 0.0, lead = 0.0;
    for (int k : tube_ks(c)) {
        TubePiece tube(op.piece(k), Vec::Zero(c.n - 1), Vec::Zero(c.n));
        auto r = taylor_remainder_scan(*ph, tube, c.samples, c.seed);
        t.rows.push_back({double(k), double(r.samples), r.max_abs, r.max_lambda_abs, r.max_leading_dev});
        lam = std::max(lam, r.max_lambda_abs);
        lead = std::max(lead, r.max_leading_dev);
        b.rep.tasks += r.samples;
    }
    b.check("max 2^k |e|", lam, "<=", 10.0);
    b.check("max 2^{3k/2} |e - leading|", lead, "<", 1.0);
}

// x box of side 2 centred at -e_n, which the averaging pulls back into the middle of f's box
GridSpec a_box(int n, int N) {
    std::array<int, 3> Ns{1, 1, 1};
    std::array<double, 3> Ls{1, 1, 1}, cs{0, 0, 0};
    for (int i = 0; i < n; ++i) {
        Ns[i] = N;
        Ls[i] = 2.0;
    }
    cs[n - 1] = -1.0;
    return GridSpec::box(n, Ns, Ls, cs);
}

void exp_a_l1(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    const AveragingSpec A = averaging(c, ph);
    const GridSpec fg = GridSpec::cube(c.n, c.N, c.L);
    const int base = c.n == 2 ? 64 : 24;
    AOptions coarse, fine;
    fine.leaf_scale = 0.5;
    auto& t = b.table("ratio", {"input", "f_l1", "coarse_ratio", "fine_ratio", "relative_change", "minkowski_ratio"});
    double worst = 0.0, mink = 0.0;
    for (int i = 0; i < c.inputs; ++i) {
        auto f = band_limited_input(fg, c.k_min, c.k_max, c.seed + i);
        const double fl = f.l1();
        auto a = apply_A(A, f, a_box(c.n, base), coarse);
        auto r = apply_A(A, f, a_box(c.n, 2 * base), fine);
        const double ca = a.values.l1() / fl, cr = r.values.l1() / fl;
        const double rel = std::abs(ca - cr) / cr;
        t.rows.push_back({double(i), fl, ca, cr, rel, a.values.l1() / a.minkowski_bound});
        worst = std::max(worst, rel);
        mink = std::max(mink, a.values.l1() / a.minkowski_bound);
    }
    b.check("max relative change of ||Af||/||f|| under refinement", worst, "<=", 0.1);
    b.check("||Af||_1 over its Minkowski bound", mink, "<=", 1.0 + 1e-12);
    b.rep.tasks = 2LL * c.inputs;
}

void exp_a_parts(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    const AveragingSpec A = averaging(c, ph);
    const GridSpec fg = GridSpec::cube(c.n, c.N, c.L);
    const GridSpec xg = c.n == 2 ? GridSpec::box(2, {48, 48, 1}, {1.6, 1.2, 1}, {0.0, -0.9, 0})
                                 : GridSpec::box(3, {16, 16, 16}, {1.6, 1.6, 1.2}, {0.0, 0.0, -0.9});
    auto& t = b.table("identity", {"input", "direct_l1", "parts_l1", "max_abs_diff", "relative_l1_diff"});
    double worst = 0.0;
    for (int i = 0; i < c.inputs; ++i) {
        auto f = band_limited_input(fg, c.k_min, c.k_max, c.seed + i);
        auto r = verify_A_summation_by_parts(A, f, c.k_max, xg);
        t.rows.push_back({double(i), r.direct_l1, r.parts_l1, r.max_abs_diff, r.relative_l1_diff});
        worst = std::max(worst, r.relative_l1_diff);
    }
    b.check("max relative L1 residual", worst, "<=", 1e-8);
    b.rep.tasks = c.inputs;
}

void exp_s_bounds(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    auto a = c.make_symbol();
    PseudoSymbol s(ph, a, averaging(c, ph), a->omega_radius());
    SymbolBoundsOptions so;
    so.samples = c.samples;
    so.seed = c.seed;
    so.domain.x_half_width = 0.9;
    so.domain.omega_max = 0.2;
    auto r = verify_symbol_bounds(s, so);
    auto& t = b.table("bounds", {"alpha_order", "beta_order", "sup_normalized", "declared", "violated"});
    for (const auto& e : r.entries)
        t.rows.push_back({double(e.alpha_order), double(e.beta_order), e.sup_normalized, e.declared, e.violated ? 1.0 : 0.0});
    b.check("violated derivative bounds", r.violations, "==", 0);
    b.rep.tasks = static_cast<long long>(r.entries.size()) * c.samples;
}

void exp_w_diff(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    auto a = c.make_symbol();
    const AveragingSpec A = averaging(c, ph);
    PseudoSymbol s(ph, a, A, a->omega_radius());
    const int n = c.n;
    // probe points: x in [-0.2, 0.2]^n, omega' in [-0.1, 0.1]^{n-1}
    Halton h(2 * n - 1, c.seed);
    std::vector<std::pair<Vec, Vec>> pts;
    for (int i = 0; i < c.inputs; ++i) {
        auto u = h.next();
        Vec x(n), om(n - 1);
        for (int j = 0; j < n; ++j) x(j) = 0.4 * u[j] - 0.2;
        for (int j = 0; j < n - 1; ++j) om(j) = 0.2 * u[n + j] - 0.1;
        pts.push_back({x, om});
    }
    const auto ks = k_range(c.k_min, c.k_max);
    auto& t = b.table("pairs", cols({"point"}, coord_names("x", n), coord_names("omega", n - 1),
                                    std::vector<std::string>{"k", "abs_W", "abs_W0", "normalized_diff",
                                                             "normalized_collapsed_diff", "tail_estimate"}));
    auto& sr = b.table("series", {"k", "max_normalized_diff"});
    std::vector<double> v;
    for (int k : ks) {
        double worst = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& [x, om] = pts[i];
            auto w = compute_W_pair(A, s, x, k, Vec::Zero(n), std::exp2(k) * lift(om));
            std::vector<double> row{double(i)};
            push_vec(row, x);
            push_vec(row, om);
            row.insert(row.end(), {double(k), std::abs(w.W), std::abs(w.W0), w.normalized_diff,
                                   w.normalized_collapsed_diff, w.tail_estimate});
            t.rows.push_back(row);
            worst = std::max(worst, w.normalized_diff);
        }
        v.push_back(worst);
        sr.rows.push_back({double(k), worst});
    }
    const auto fit = fit_decay_slope(series_of(ks, v));
    b.fit("max_normalized_diff", fit);
    b.check("fitted log2 slope of 2^{(n-1)k/2}|W - W0|", fit.slope, "<=", -0.25);
    b.rep.tasks = static_cast<long long>(ks.size() * pts.size());
}

void exp_e_l1(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    if (c.k_max - 2 < c.k_min) throw PreconditionError("e-l1: need k_max - 2 >= k_min");
    OperatorSpec op{ph, c.make_symbol(), c.eps, c.k_min, c.k_max, OperatorVariant::nondeg};
    const AveragingSpec A = averaging(c, ph);
    const auto zs = sample_y(*ph, c.z_count, 0.1, c.seed);
    auto& t = b.table("partial", cols({"z_index"}, coord_names("z", c.n), std::vector<std::string>{"K", "l1"}));
    auto& sm = b.table("summary", cols({"z_index"}, coord_names("z", c.n),
                                       std::vector<std::string>{"l1", "t_l1", "sa_l1", "leakage", "increase"}));
    const int K0 = c.k_max - 2;
    double worst_inc = -1e300;
    std::vector<double> l1s;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        auto r = apply_E(op, A, zs[i]);
        double p0 = 0.0, p1 = 0.0;
        for (const auto& [K, v] : r.partial) {
            std::vector<double> row{double(i)};
            push_vec(row, zs[i]);
            row.insert(row.end(), {double(K), v});
            t.rows.push_back(row);
            if (K == K0) p0 = v;
            if (K == c.k_max) p1 = v;
        }
        const double inc = (p1 - p0) / p0;
        std::vector<double> row{double(i)};
        push_vec(row, zs[i]);
        row.insert(row.end(), {r.l1, r.t_l1, r.sa_l1, r.leakage, inc});
        sm.rows.push_back(row);
        worst_inc = std::max(worst_inc, inc);
        l1s.push_back(r.l1);
    }
    b.check(fmt::format("max relative increase of partial sums from K = {} to {}", K0, c.k_max), worst_inc, "<=", 0.1);
    b.check("max/min of ||E delta_z||_1 over z", spread(l1s), "<=", 2.0);
    b.rep.tasks = static_cast<long long>(zs.size());
}

std::vector<int> resolutions(const RunConfig& c) {
    std::vector<int> r;
    for (int N = 128; N <= c.N; N *= 2) r.push_back(N);
    return r;
}

void probe_table(Builder& b, const std::string& name, const WeakTypeProbe& p) {
    auto& t = b.table(name, {"N", "h", "l1", "weak", "weak_exponent"});
    std::vector<std::string> dc{"N"};
    for (int j = kLadderLo; j <= kLadderHi; ++j) dc.push_back(fmt::format("m_2^{}", j));
    auto& d = b.table(name + "_distribution", dc);
    for (const auto& r : p.rows) {
        t.rows.push_back({double(r.N), r.h, r.l1, r.weak, double(r.weak_exponent)});
        std::vector<double> row{double(r.N)};
        row.insert(row.end(), r.distribution.begin(), r.distribution.end());
        d.rows.push_back(row);
    }
}

bool strictly_increasing_l1(const WeakTypeProbe& p) {
    for (std::size_t i = 1; i < p.rows.size(); ++i)
        if (!(p.rows[i].l1 > p.rows[i - 1].l1)) return false;
    return true;
}

void exp_weak_type(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    const auto res = resolutions(c);
    if (res.size() < 3) throw PreconditionError("weak-type: need N >= 512 for three resolutions");
    auto main = weak_type_probe(*ph, c.L, c.order, res);
    auto ctrl = weak_type_probe(*ph, c.L, -double(c.n), res);
    probe_table(b, "probe", main);
    probe_table(b, "control", ctrl);
    b.fit("l1_vs_log2N", main.l1_fit);
    b.fit("control_l1_vs_log2N", ctrl.l1_fit);
    b.check("L1 series strictly increasing (1 = yes)", strictly_increasing_l1(main), "==", 1);
    b.check("L1 slope against log2 N", main.l1_log_slope, ">", 0.0);
    b.check("weak series max/min - 1", main.weak_spread, "<=", 0.25);
    b.check("control L1 max/min - 1", ctrl.l1_spread, "<=", 0.05);
    b.check("control weak max/min - 1", ctrl.weak_spread, "<=", 0.05);
    b.check("weak <= L1 in every row (1 = yes)", main.chebyshev && ctrl.chebyshev, "==", 1);
    b.check("distribution functions non-increasing (1 = yes)", main.monotone && ctrl.monotone, "==", 1);
    b.rep.tasks = 2LL * static_cast<long long>(res.size());
}

void exp_model_log(const RunConfig& c, Builder& b) {
    auto ph = c.make_phase();
    if (c.n != 2 || ph->name() != "halfwave") throw PreconditionError("model-log-divergence: half-wave phase, n = 2");
    const auto fit = fit_sphere_constants(64.0, 256.0, 385);
    auto& t = b.table("sphere_constants", {"re_c_plus", "im_c_plus", "re_c_minus", "im_c_minus", "abs_c_plus",
                                           "arg_c_plus_over_pi", "abs_c_minus", "arg_c_minus_over_pi", "residual"});
    t.rows.push_back({fit.c_plus.real(), fit.c_plus.imag(), fit.c_minus.real(), fit.c_minus.imag(),
                      std::abs(fit.c_plus), std::arg(fit.c_plus) / kPi, std::abs(fit.c_minus),
                      std::arg(fit.c_minus) / kPi, fit.relative_residual});
    b.check("two-term fit relative residual", fit.relative_residual, "<=", 1e-2);
    const auto res = resolutions(c);
    if (res.size() < 3) throw PreconditionError("model-log-divergence: need N >= 512");
    auto p = weak_type_probe(*ph, c.L, -0.5 * (c.n - 1), res);
    auto& d = b.table("divergence", {"N", "log2_N", "l1", "increment"});
    std::vector<double> inc;
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
        const double di = i ? p.rows[i].l1 - p.rows[i - 1].l1 : 0.0;
        if (i) inc.push_back(di);
        d.rows.push_back({double(p.rows[i].N), std::log2(p.rows[i].N), p.rows[i].l1, di});
    }
    b.fit("l1_vs_log2N", p.l1_fit);
    b.check("L1 slope against log2 N", p.l1_log_slope, ">", 0.0);
    // logarithmic, not power-law: the increments per doubling stay comparable
    const auto [lo, hi] = std::minmax_element(inc.begin(), inc.end());
    b.check("min increment per doubling", *lo, ">", 0.0);
    b.check("max/min increment per doubling", *hi / *lo, "<=", 2.0);
    b.rep.tasks = 1 + static_cast<long long>(res.size());
}

using ExperimentFn = void (*)(const RunConfig&, Builder&);

ExperimentFn find_experiment(const std::string& name) {
    static const std::map<std::string, ExperimentFn> table = {
        {"phase-validate", exp_phase_validate}, {"psi-bounds", exp_psi_bounds},
        {"deg-decay", exp_deg_decay},           {"nodecay-uniform", exp_nodecay},
        {"tube-decay", exp_tube_decay},         {"taylor-remainder", exp_taylor},
        {"a-l1", exp_a_l1},                     {"a-parts-identity", exp_a_parts},
        {"s-symbol-bounds", exp_s_bounds},      {"stationarity-identities", exp_stationarity},
        {"w-diff-decay", exp_w_diff},           {"e-l1", exp_e_l1},
        {"weak-type", exp_weak_type},           {"model-log-divergence", exp_model_log}};
    auto it = table.find(name);
    if (it == table.end()) {
        std::string valid;
        for (const auto& e : kExperiments) valid += " " + e;
        throw UsageError("unknown experiment '" + name + "'; valid:" + valid);
    }
    return it->second;
}

// --- output -------------------------------------------------------------------------------

std::string csv_text(const ResultTable& t) {
    std::string s;
    for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
    s += "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + fmt::format("{:.17g}", r[i]);
        s += "\n";
    }
    return s;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw ResourceError("cannot write " + p.string());
    o << s;
    if (!o) throw ResourceError("write failed: " + p.string());
}

struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    int col(const std::string& c) const {
        auto it = std::find(columns.begin(), columns.end(), c);
        return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
    }
};

CsvData read_csv(const fs::path& p) {
    std::ifstream in(p);
    CsvData d;
    std::string line;
    std::getline(in, line);
    std::stringstream hs(line);
    for (std::string c; std::getline(hs, c, ',');) d.columns.push_back(c);
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::vector<double> r;
        for (std::string c; std::getline(ls, c, ',');) r.push_back(std::stod(c));
        d.rows.push_back(r);
    }
    return d;
}

struct PlotSpec {
    std::string table, x, y, group, title;
};

// log2 y against x, one polyline per group value; reads only the csv
std::string svg_plot(const CsvData& d, const PlotSpec& s) {
    const int xi = d.col(s.x), yi = d.col(s.y), gi = s.group.empty() ? -1 : d.col(s.group);
    std::map<double, std::vector<std::pair<double, double>>> lines;
    for (const auto& r : d.rows)
        if (r[yi] > 0) lines[gi >= 0 ? r[gi] : 0.0].push_back({r[xi], std::log2(r[yi])});
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& [g, pts] : lines)
        for (const auto& [x, y] : pts) {
            x0 = std::min(x0, x), x1 = std::max(x1, x);
            y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (lines.empty()) x0 = y0 = 0, x1 = y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double W = 640, H = 400, m = 60;
    auto px = [&](double x) { return m + (x - x0) / (x1 - x0) * (W - 2 * m); };
    auto py = [&](double y) { return H - m - (y - y0) / (y1 - y0) * (H - 2 * m); };
    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        W, H);
    out += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n", W / 2, s.title);
    out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", m, H - m, W - m);
    out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", m, m, H - m);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", W / 2, H - 15, s.x);
    out += fmt::format("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">log2 {}</text>\n",
                       H / 2, H / 2, s.y);
    for (double v : {x0, x1})
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px(v), H - m + 16, v);
    for (double v : {y0, y1})
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", m - 4, py(v) + 4, v);
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    int ci = 0;
    for (const auto& [g, pts] : lines) {
        std::string path;
        for (const auto& [x, y] : pts) path += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                           palette[ci++ % 7], path);
    }
    return out + "</svg>\n";
}

std::vector<PlotSpec> plots_for(const std::string& e) {
    if (e == "deg-decay") return {{"series", "k", "l1", "y_index", "degenerate kernel L1"}};
    if (e == "nodecay-uniform") return {{"series", "k", "l1", "", "dyadic kernel L1"}};
    if (e == "tube-decay") return {{"tube", "k", "normalized", "", "normalized tube kernel L1"}};
    if (e == "w-diff-decay") return {{"series", "k", "max_normalized_diff", "", "normalized |W - W0|"}};
    if (e == "e-l1") return {{"partial", "K", "l1", "z_index", "partial sums of ||E delta_z||_1"}};
    if (e == "psi-bounds") return {{"ratio", "k", "ratio", "", "psi_x max/min"}};
    if (e == "weak-type")
        return {{"probe", "N", "l1", "", "L1 of Tf"}, {"probe", "N", "weak", "", "weak quasi-norm of Tf"},
                {"control", "N", "l1", "", "control L1"}};
    if (e == "model-log-divergence") return {{"divergence", "log2_N", "l1", "", "L1 of the model kernel"}};
    return {};
}

nlohmann::json fit_json(const DecayFit& f) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& [k, v] : f.series) s.push_back({k, v});
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"slope_stderr", f.slope_stderr}, {"series", s}};
}

nlohmann::json config_json(const RunConfig& c) {
    nlohmann::json p = c.phase_params;
    return {{"run", {{"experiment", c.experiment}, {"output_dir", c.output_dir}, {"seed", c.seed},
                     {"threads", c.threads}, {"plots", c.plots}}},
            {"phase", {{"name", c.phase}, {"parameters", p}}},
            {"symbol", {{"order", c.order}, {"spatial_plateau", c.spatial_plateau}, {"k_min", c.symbol_k_min},
                        {"omega_max", c.omega_max}}},
            {"grid", {{"n", c.n}, {"N", c.N}, {"L", c.L}}},
            {"scales", {{"eps", c.eps}, {"k_min", c.k_min}, {"k_max", c.k_max}}},
            {"samples", {{"samples", c.samples}, {"y_count", c.y_count}, {"z_count", c.z_count},
                         {"inputs", c.inputs}}}};
}

}  // namespace

// --- config ---------------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() { return kExperiments; }

void RunConfig::validate() const {
    std::vector<std::string> bad;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) bad.push_back(msg);
    };
    if (!experiment.empty() && !known_experiment(experiment)) {
        std::string valid;
        for (const auto& e : kExperiments) valid += " " + e;
        bad.push_back("run.experiment: unknown '" + experiment + "'; valid:" + valid);
    }
    need(!output_dir.empty(), "run.output_dir: empty");
    need(threads >= 0, "run.threads: must be >= 0");
    need(n == 2 || n == 3, "grid.n: must be 2 or 3");
    need(N >= 64 && N <= 2048 && (N & (N - 1)) == 0, "grid.N: power of two in [64, 2048]");
    need(std::isfinite(L) && L > 0, "grid.L: must be positive");
    need(eps > 0 && eps <= 0.5, "scales.eps: must lie in (0, 1/2]");
    need(k_min >= 1 && k_min <= k_max && k_max <= 14, "scales: need 1 <= k_min <= k_max <= 14");
    need(std::isfinite(order), "symbol.order: not finite");
    need(std::isfinite(spatial_plateau), "symbol.spatial_plateau: not finite");
    need(symbol_k_min >= 0 && symbol_k_min <= 14, "symbol.k_min: must lie in [0, 14]");
    need(omega_max > 0 && omega_max <= 0.5, "symbol.omega_max: must lie in (0, 1/2]");
    need(samples >= 1, "samples.samples: must be >= 1");
    need(y_count >= 1, "samples.y_count: must be >= 1");
    need(z_count >= 1, "samples.z_count: must be >= 1");
    need(inputs >= 1, "samples.inputs: must be >= 1");
    if (n == 2 || n == 3) {
        try {
            make_phase();
        } catch (const Error& e) {
            bad.push_back(std::string("phase: ") + e.what());
        }
    }
    if (!bad.empty()) {
        std::string msg = "invalid config:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw UsageError(msg);
    }
}

std::string RunConfig::to_ini() const {
    std::string s;
    s += fmt::format("[run]\nexperiment = {}\noutput_dir = {}\nseed = {}\nthreads = {}\nplots = {}\n\n", experiment,
                     output_dir, seed, threads, plots ? "true" : "false");
    s += fmt::format("[phase]\nname = {}\n", phase);
    for (const auto& [k, v] : phase_params) s += fmt::format("{} = {}\n", k, num(v));
    s += fmt::format("\n[symbol]\norder = {}\nspatial_plateau = {}\nk_min = {}\nomega_max = {}\n\n", num(order),
                     num(spatial_plateau), symbol_k_min, num(omega_max));
    s += fmt::format("[grid]\nn = {}\nN = {}\nL = {}\n\n", n, N, num(L));
    s += fmt::format("[scales]\neps = {}\nk_min = {}\nk_max = {}\n\n", num(eps), k_min, k_max);
    s += fmt::format("[samples]\nsamples = {}\ny_count = {}\nz_count = {}\ninputs = {}\n", samples, y_count, z_count,
                     inputs);
    return s;
}

RunConfig RunConfig::from_ini(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw UsageError(fmt::format("config: line {}: {}", e.line(), e.message()));
    }
    RunConfig c;
    c.phase_params.clear();
    std::vector<std::string> bad;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            bad.push_back("key '" + section + "' outside any section");
            continue;
        }
        for (const auto& [key, node] : body) {
            const std::string v = node.data();
            const std::string f = section + "." + key;
            try {
                if (section == "run") {
                    if (key == "experiment") c.experiment = v;
                    else if (key == "output_dir") c.output_dir = v;
                    else if (key == "seed") c.seed = parse_u64(f, v);
                    else if (key == "threads") c.threads = parse_int(f, v);
                    else if (key == "plots") c.plots = parse_bool(f, v);
                    else bad.push_back("unknown key " + f);
                } else if (section == "phase") {
                    if (key == "name") c.phase = v;
                    else c.phase_params[key] = parse_double(f, v);
                } else if (section == "symbol") {
                    if (key == "order") c.order = parse_double(f, v);
                    else if (key == "spatial_plateau") c.spatial_plateau = parse_double(f, v);
                    else if (key == "k_min") c.symbol_k_min = parse_int(f, v);
                    else if (key == "omega_max") c.omega_max = parse_double(f, v);
                    else bad.push_back("unknown key " + f);
                } else if (section == "grid") {
                    if (key == "n") c.n = parse_int(f, v);
                    else if (key == "N") c.N = parse_int(f, v);
                    else if (key == "L") c.L = parse_double(f, v);
                    else bad.push_back("unknown key " + f);
                } else if (section == "scales") {
                    if (key == "eps") c.eps = parse_double(f, v);
                    else if (key == "k_min") c.k_min = parse_int(f, v);
                    else if (key == "k_max") c.k_max = parse_int(f, v);
                    else bad.push_back("unknown key " + f);
                } else if (section == "samples") {
                    if (key == "samples") c.samples = parse_int(f, v);
                    else if (key == "y_count") c.y_count = parse_int(f, v);
                    else if (key == "z_count") c.z_count = parse_int(f, v);
                    else if (key == "inputs") c.inputs = parse_int(f, v);
                    else bad.push_back("unknown key " + f);
                } else {
                    bad.push_back("unknown section [" + section + "]");
                    break;
                }
            } catch (const UsageError& e) {
                bad.push_back(e.what());
            }
        }
    }
    if (!bad.empty()) {
        std::string msg = "invalid config:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw UsageError(msg);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_ini(ss.str());
}

RunConfig RunConfig::defaults(const std::string& e) {
    if (!known_experiment(e)) find_experiment(e);
    RunConfig c;
    c.experiment = e;
    if (e == "phase-validate" || e == "stationarity-identities") {
        c.samples = 1000;
    } else if (e == "psi-bounds") {
        c.k_min = 8;
        c.k_max = 10;
    } else if (e == "deg-decay") {
        c.phase = "cusp";
    } else if (e == "tube-decay") {
        c.k_min = 6;
    } else if (e == "taylor-remainder") {
        c.k_min = 6;
        c.samples = 200;
    } else if (e == "a-l1" || e == "a-parts-identity") {
        c.k_min = 3;
        c.k_max = 5;
        c.N = 512;
        c.inputs = e == "a-l1" ? 5 : 3;
    } else if (e == "s-symbol-bounds") {
        c.samples = 100;
    } else if (e == "w-diff-decay") {
        c.k_max = 8;
    } else if (e == "weak-type" || e == "model-log-divergence") {
        c.N = 1024;
    }
    return c;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : to_ini()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

PhasePtr RunConfig::make_phase() const { return fiolab::make_phase(phase, n, phase_params); }

SymbolPtr RunConfig::make_symbol() const {
    StandardSymbolParams p = StandardSymbol::defaults(n);
    p.order = order;
    p.spatial_plateau = spatial_plateau;
    p.k_min = symbol_k_min;
    p.omega_max = omega_max;
    return std::make_shared<const StandardSymbol>(p);
}

// --- running --------------------------------------------------------------------------------

ExperimentReport execute(const RunConfig& config) {
    config.validate();
    if (config.experiment.empty()) throw UsageError("no experiment given");
    const auto fn = find_experiment(config.experiment);
    if (config.threads > 0) omp_set_num_threads(config.threads);
    Builder b;
    b.rep.experiment = config.experiment;
    b.rep.config_hash = config.hash();
    const auto t0 = std::chrono::steady_clock::now();
    const std::string ctx = "experiment " + config.experiment + ": ";
    try {
        fn(config, b);
    } catch (const ResourceError& e) {
        throw ExperimentError(ctx + e.what(), ExperimentError::Kind::resource);
    } catch (const UsageError& e) {
        throw ExperimentError(ctx + e.what(), ExperimentError::Kind::usage);
    } catch (const PreconditionError& e) {
        throw ExperimentError(ctx + e.what(), ExperimentError::Kind::usage);
    } catch (const Error& e) {
        throw ExperimentError(ctx + e.what(), ExperimentError::Kind::failure);
    }
    b.rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    b.rep.pass = !b.rep.checks.empty() &&
                 std::all_of(b.rep.checks.begin(), b.rep.checks.end(), [](const auto& c) { return c.pass; });
    return b.rep;
}

ExperimentReport run(const RunConfig& config) {
    ExperimentReport rep = execute(config);
    const fs::path root(config.output_dir);
    const fs::path dir = root / config.experiment;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ResourceError("cannot create " + dir.string() + ": " + ec.message());
    for (auto& t : rep.tables) {
        const fs::path p = dir / (t.name + ".csv");
        write_text(p, csv_text(t));
        t.path = fs::relative(p, root).generic_string();
    }
    if (config.plots) {
        for (const auto& ps : plots_for(config.experiment)) {
            const fs::path csv = dir / (ps.table + ".csv");
            if (!fs::exists(csv)) continue;
            const fs::path svg = dir / (ps.table + "_" + ps.y + ".svg");
            write_text(svg, svg_plot(read_csv(csv), ps));
            rep.plots.push_back(fs::relative(svg, root).generic_string());
        }
    }
    const SignConvention sc = determine_sign_convention();
    nlohmann::json m;
    m["experiment"] = rep.experiment;
    m["config_hash"] = rep.config_hash;
    m["seed"] = config.seed;
    m["config"] = config_json(config);
    m["config_ini"] = config.to_ini();
    m["sign_conventions"] = {{"fourier_transform", "fhat(xi) = int f(x) e^{-2 pi i x.xi} dx"},
                             {"stationary_sign", sc.stationary_sign},
                             {"damping_sign", sc.damping_sign},
                             {"error_plus", sc.error_plus},
                             {"error_minus", sc.error_minus},
                             {"k", sc.k}};
    nlohmann::json th = nlohmann::json::array();
    for (const auto& c : rep.checks)
        th.push_back({{"name", c.name}, {"value", c.value}, {"comparison", c.comparison}, {"threshold", c.threshold},
                      {"pass", c.pass}});
    m["thresholds"] = th;
    nlohmann::json fits = nlohmann::json::object();
    for (const auto& f : rep.fits) fits[f.name] = fit_json(f.fit);
    m["fits"] = fits;
    nlohmann::json tabs = nlohmann::json::array();
    for (const auto& t : rep.tables) tabs.push_back({{"name", t.name}, {"path", t.path}, {"rows", t.rows.size()}});
    m["tables"] = tabs;
    m["plots"] = rep.plots;
    m["pass"] = rep.pass;
    m["seconds"] = rep.seconds;
    m["tasks"] = rep.tasks;
    m["threads"] = config.threads > 0 ? config.threads : omp_get_max_threads();
    write_text(root / "manifest.json", m.dump(2) + "\n");
    return rep;
}

// --- weak type ---------------------------------------------------------------------------------

WeakTypeRow weak_type_row(const GridSpec& g, const std::function<Complex(const Vec&)>& multiplier) {
    const auto f = DeltaApproximant(Vec::Zero(g.n), g).to_function();
    const auto t = apply_multiplier(f, multiplier, false);
    WeakTypeRow r;
    r.N = g.N[0];
    r.h = g.h(0);
    r.l1 = t.l1();
    const double cv = g.cell_volume();
    std::vector<double> mag(t.values.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(t.values[i]);
    std::sort(mag.begin(), mag.end());
    r.weak = 0.0;
    for (int j = kLadderLo; j <= kLadderHi; ++j) {
        const double lam = std::exp2(j);
        const auto above = mag.end() - std::upper_bound(mag.begin(), mag.end(), lam);
        const double meas = static_cast<double>(above) * cv;
        r.distribution.push_back(meas);
        if (lam * meas > r.weak) {
            r.weak = lam * meas;
            r.weak_exponent = j;
        }
    }
    return r;
}

WeakTypeProbe weak_type_probe(const PhaseFunction& phase, double L, double order, const std::vector<int>& res,
                              double max_points) {
    if (!phase.translation_invariant())
        throw PreconditionError("weak_type_probe: needs a translation-invariant phase");
    if (res.size() < 2) throw PreconditionError("weak_type_probe: need at least two resolutions");
    const int n = phase.dim();
    WeakTypeProbe p;
    p.order = order;
    for (int N : res)
        if (std::pow(double(N), n) > max_points)
            throw ResourceError(fmt::format("weak_type_probe: N = {} exceeds the point budget", N));
    for (int N : res) {
        const GridSpec g = GridSpec::cube(n, N, L);
        // radial roll-off over [nu/2, nu]; the square lattice edge would add its own Dirichlet-kernel growth
        const double half_nu = 0.5 * g.min_nyquist();
        p.rows.push_back(weak_type_row(g, [&](const Vec& xi) {
            const double r = xi.norm();
            return cis(phase.symbol_phase(xi)) * std::pow(1.0 + r * r, 0.5 * order) * rho(r / half_nu);
        }));
    }
    std::vector<double> l1, weak;
    for (const auto& r : p.rows) {
        l1.push_back(r.l1);
        weak.push_back(r.weak);
        p.chebyshev = p.chebyshev && r.weak <= r.l1;
        for (std::size_t j = 1; j < r.distribution.size(); ++j)
            p.monotone = p.monotone && r.distribution[j] <= r.distribution[j - 1];
    }
    // least squares of l1 on log2 N
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(p.rows.size());
    for (const auto& r : p.rows) {
        const double x = std::log2(r.N);
        sx += x, sy += r.l1, sxx += x * x, sxy += x * r.l1;
        p.l1_fit.series.push_back({x, r.l1});
    }
    const double den = m * sxx - sx * sx;
    p.l1_log_slope = (m * sxy - sx * sy) / den;
    p.l1_fit.slope = p.l1_log_slope;
    p.l1_fit.intercept = (sy - p.l1_log_slope * sx) / m;
    if (p.rows.size() > 2) {
        double sse = 0.0;
        for (const auto& [x, y] : p.l1_fit.series) sse += std::pow(y - p.l1_fit.intercept - p.l1_fit.slope * x, 2);
        p.l1_fit.slope_stderr = std::sqrt(sse / (m - 2) * m / den);
    }
    p.l1_spread = spread(l1) - 1.0;
    p.weak_spread = spread(weak) - 1.0;
    return p;
}

SphereFit fit_sphere_constants(double r_lo, double r_hi, int points) {
    if (!(r_lo > 0 && r_hi > r_lo) || points < 4) throw PreconditionError("fit_sphere_constants: bad range");
    // hat(sigma)(r e_1) = int_0^{2 pi} e^{-2 pi i r cos t} dt, periodic trapezoid
    auto sigma_hat = [](double r) {
        const int M = 2 * static_cast<int>(std::ceil(4 * kPi * r)) + 64;
        Complex s = 0.0;
        for (int i = 0; i < M; ++i) s += cis(-r * std::cos(kTwoPi * i / M));
        return s * (kTwoPi / M);
    };
    Eigen::MatrixXcd A(points, 2);
    Eigen::VectorXcd b(points);
    for (int i = 0; i < points; ++i) {
        // golden-ratio radii: a regular step would make the two columns collinear
        const double u = std::fmod(0.5 + i * 0.6180339887498949, 1.0);
        const double r = r_lo + (r_hi - r_lo) * u;
        // rows weighted by r^{1/2} so every sample counts alike
        A(i, 0) = cis(r);
        A(i, 1) = cis(-r);
        b(i) = std::sqrt(r) * sigma_hat(r);
    }
    const Eigen::VectorXcd c = A.colPivHouseholderQr().solve(b);
    SphereFit f;
    f.c_plus = c(0);
    f.c_minus = c(1);
    f.relative_residual = (A * c - b).norm() / b.norm();
    f.points = points;
    return f;
}

}  // namespace fiolab
