#pragma once

#include "fiolab/decomposition.hpp"
#include "fiolab/oscillatory.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace fiolab {

// --- averaging operator ---------------------------------------------------------------

// weight varphi(x, omega) = chi~(x) rho(|omega| / omega_max), chi~ = prod rho(|x_i| / x_plateau);
// damping e^{sign mu pi i/4} (1 - phi_{-eps k}(J)) |J|^{1/2}
struct AveragingSpec {
    PhasePtr phase;
    double eps = 0.25;
    int k_lo = 4;
    int k_hi = 10;
    double omega_max = 0.25;
    double x_plateau = 1.0;
    int damping_sign = 1;

    void validate() const;
    int dim() const { return phase->dim(); }
    double weight(const Vec& x, const Vec& omega) const;
    double omega_support() const { return 2.0 * omega_max; }
    double x_support() const { return 2.0 * x_plateau; }
    Complex damping(const Vec& x, const Vec& omega, int k) const;
    Complex damping_from_hessian(const Mat& H, int k) const;
};

// signature from eigenvalue signs
int hessian_mu(const Mat& H);

// (P_k f)(w) with an optional localisation: P_k f is negligible outside |w - center| > radius(k)
struct BandSource {
    std::function<Complex(int, const Vec&)> eval;
    Vec center;
    std::function<double(int)> radius;  // empty: no localisation
};

// P_k delta_z(w) = 2^{kn} eta0^(2^k |w - z|), truncated where the L1 tail drops below tail_tolerance
BandSource delta_source(int n, const Vec& z, double tail_tolerance = 1e-5);
// radius r (in units of 2^{-k}) with the L1 tail of eta0^ beyond r below tol
double band_kernel_radius(int n, double tol);

// cubic Catmull-Rom pullback; DomainError when the stencil leaves the box
Complex interpolate_cubic(const GriddedFunction& f, const Vec& w);

struct AOptions {
    double leaf_scale = 1.0;  // omega leaf width, in units of 2^{-k} / Lip
    int gl_points = 12;
    Exec exec = Exec::parallel;
};

struct AResult {
    GriddedFunction values;
    double minkowski_bound = 0.0;  // sum of |integrand| over nodes and x, bounds ||Af||_1
    long long nodes = 0;           // omega nodes evaluated
};

AResult apply_A(const AveragingSpec& spec, const BandSource& f, const GridSpec& x_grid, const AOptions& opts = {});
// gridded f: P_k f by FFT on f's grid, pulled back by cubic interpolation
AResult apply_A(const AveragingSpec& spec, const GriddedFunction& f, const GridSpec& x_grid, const AOptions& opts = {});
// a single band k
AResult apply_A_band(const AveragingSpec& spec, const BandSource& f, int k, const GridSpec& x_grid,
                     const AOptions& opts = {});

struct SummationByPartsReport {
    int k_min = 0, k_max = 0;
    double direct_l1 = 0.0;
    double parts_l1 = 0.0;
    double max_abs_diff = 0.0;
    double relative_l1_diff = 0.0;
};

// eta_k sum against the phi_k / cutoff-difference form on the same omega nodes
SummationByPartsReport verify_A_summation_by_parts(const AveragingSpec& spec, const GriddedFunction& f, int k_max,
                                                   const GridSpec& x_grid, const AOptions& opts = {});

// band-limited test input: smooth wave packets filtered to 2^{k_min} <= |xi| <= 2^{k_max-1}
GriddedFunction band_limited_input(const GridSpec& g, int k_min, int k_max, std::uint64_t seed, double radius = 0.4);

// --- pseudodifferential factor ----------------------------------------------------------

// s(x, grad_x Phi(x, xi)) = lambda^{(n-1)/2} a(x, xi) / varphi(x, omega), zero off the support image
class PseudoSymbol final : public SymbolFunction {
public:
    // support_omega: a vanishes for |omega| > support_omega
    PseudoSymbol(PhasePtr phase, std::shared_ptr<const SymbolFunction> a, AveragingSpec weight, double support_omega);

    int dim() const override { return phase_->dim(); }
    double order() const override { return 0.0; }
    Complex eval(const Vec& x, const Vec& zeta) const override;
    double x_half_width() const override { return a_->x_half_width(); }

    // zeta lies in grad_x Phi(x, .) of the cone |omega| <= support_omega
    bool in_support_image(const Vec& x, const Vec& zeta) const;

    // s = spatial(x) sigma(zeta)
    bool x_separable() const { return separable_; }
    double spatial(const Vec& x) const;
    Complex sigma(const Vec& zeta) const;

    const PhasePtr& phase() const { return phase_; }
    const AveragingSpec& weight() const { return w_; }

private:
    PhasePtr phase_;
    std::shared_ptr<const SymbolFunction> a_;
    AveragingSpec w_;
    double support_omega_;
    bool separable_ = false;
    const ProjectiveAmplitude* pa_ = nullptr;
    Complex quotient(const Vec& x, const Vec& xi) const;
};

Complex build_s(const PhasePtr& phase, const std::shared_ptr<const SymbolFunction>& a, const AveragingSpec& varphi,
                const Vec& x, const Vec& zeta, double support_omega = 0.25);

// Sg(x) = sum_zeta e^{2 pi i x.zeta} s(x, zeta) g^(zeta) dzeta; FFT when s is separable
GriddedFunction apply_S(const PseudoSymbol& s, const GriddedFunction& g, Exec exec = Exec::parallel);
GriddedFunction apply_S_direct(const PseudoSymbol& s, const GriddedFunction& g, Exec exec = Exec::parallel,
                               double max_work = 4e10);

// --- error operator ----------------------------------------------------------------------

struct EOptions {
    double tail_tolerance = 1e-4;
    double margin = 0.7;
    double oversample = 1.05;
    double leak_tolerance = 2e-2;
    int max_growth = 2;
    double max_points = 4e7;
    AOptions a{1.0, 6, Exec::parallel};
};

struct EResult {
    Vec z;
    GridSpec grid;
    GriddedFunction values;                       // E delta_z for the full k range
    std::vector<std::pair<int, double>> partial;  // (K, ||E_{k_lo..K} delta_z||_1)
    double l1 = 0.0;
    double t_l1 = 0.0;   // ||T_nondeg delta_z||_1
    double sa_l1 = 0.0;  // ||SA delta_z||_1
    double leakage = 0.0;
    double seconds = 0.0;
};

EResult apply_E(const OperatorSpec& op, const AveragingSpec& A, const Vec& z, const EOptions& opts = {});

// --- W diagnostics -----------------------------------------------------------------------

struct WOptions {
    double window = 1.0;       // scales the three localisation radii
    bool estimate_tail = true; // rerun with 0.75x windows and report the change
    int gl_points = 16;
    double max_points = 3e9;
    Exec exec = Exec::parallel;
};

struct WDiagnostic {
    Vec x, z, xi_prime;
    int k = 0;
    Complex W, W0, W_collapsed;
    double normalized_diff = 0.0;            // |W - W0| 2^{(n-1)k/2}
    double normalized_collapsed_diff = 0.0;  // |W_collapsed - W0| 2^{(n-1)k/2}
    double r_omega = 0.0, r_y = 0.0, r_zeta = 0.0;
    double tail_estimate = 0.0;
    long long points = 0;
};

WDiagnostic compute_W_pair(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& z,
                           const Vec& xi_prime, const WOptions& opts = {});
// the y, zeta integrals replaced by their Fourier-inversion limit
Complex W_collapsed(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& xi_prime,
                    double window = 1.0, int gl_points = 16);
Complex W_leading(const AveragingSpec& A, const PseudoSymbol& s, const Vec& x, int k, const Vec& xi_prime);

// --- identities and sign convention ---------------------------------------------------

struct StationarityReport {
    std::string phase;
    int samples = 0;
    double max_gradient_residual = 0.0;    // |grad_omega(xi'.grad_xi Phi) - lambda'(omega'-omega).H| / (lambda'(1+|H|))
    double max_stationary_gradient = 0.0;  // the same gradient at omega = omega', over lambda'
    double max_hessian_residual = 0.0;     // relative, det at omega' vs (-lambda')^{n-1} J
    int hessian_samples = 0;
    double max_value_residual = 0.0;       // |xi'.grad_xi Phi(x,omega') - Phi(x,xi')| / (|xi'|(1+|x|))
};

StationarityReport verify_stationarity_identities(const PhaseFunction& phase, int samples, std::uint64_t seed = 3,
                                                  const ConeSpec& cone = {});

struct SignConvention {
    int stationary_sign = 0;  // omega integral ~ e^{stationary_sign mu pi i/4}
    int damping_sign = 0;     // A damps with e^{damping_sign mu pi i/4}
    double error_plus = 0.0, error_minus = 0.0;
    int k = 0;
};

// half-wave, n = 2: compare the omega integral against both leading terms
SignConvention determine_sign_convention(int k = 8);

}  // namespace fiolab
