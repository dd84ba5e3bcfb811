#pragma once

#include "fiolab/oscillatory.hpp"
#include "fiolab/symbols.hpp"

#include <string>
#include <utility>
#include <vector>

namespace fiolab {

enum class OperatorVariant { full, deg, nondeg };
std::string to_string(OperatorVariant v);

struct OperatorSpec {
    PhasePtr phase;
    SymbolPtr symbol;
    double eps = 0.25;
    int k_lo = 4;
    int k_hi = 10;
    OperatorVariant variant = OperatorVariant::full;

    void validate() const;
    PiecePtr piece(int k) const;
    int dim() const { return phase->dim(); }
};

// y where the singular set of the e_n direction passes through x = 0
Vec kernel_center_y(const PhaseFunction& phase);
// centre plus count-1 Halton offsets in [-spread, spread]^n
std::vector<Vec> sample_y(const PhaseFunction& phase, int count, double spread = 0.25, std::uint64_t seed = 5);

struct KernelNorm {
    int k = 0;
    Vec y;
    double value = 0.0;
    double leakage = 0.0;
    KernelMethod method = KernelMethod::automatic;
    std::size_t grid_points = 0;
};

KernelNorm kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts = {});
double deg_kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts = {});
double nodecay_kernel_l1(const OperatorSpec& op, int k, const Vec& y, const KernelRowOptions& opts = {});

// --- least-squares decay fits -------------------------------------------------------

struct DecayFit {
    std::vector<std::pair<double, double>> series;  // (k, value)
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

DecayFit fit_decay_slope(const std::vector<std::pair<double, double>>& series);
// exponent loss C in 2^{C eps k}: (measured - ideal) / eps
double fitted_loss_constant(double slope, double ideal_slope, double eps);

// --- tubes ------------------------------------------------------------------------------

struct TubeFamily {
    Vec x;
    int k = 0;
    double eps = 0.0;
    double spacing = 0.0;      // lattice step of the centres
    double cell_volume = 0.0;  // spacing^{n-1}
    std::vector<Vec> centers;
    std::vector<PartitionWeight> weights;
    std::vector<double> nondeg_weight;  // 1 - phi_{-eps k}(J(x, omega_D))

    // sum over centres of psi_{x,omega_D}(omega) times the cell volume
    double lattice_sum(const Vec& omega) const;
};

TubeFamily build_tube_family(const PhaseFunction& phase, const Vec& x, int k, double eps, double omega_max = 0.25,
                             double spacing_factor = 1.0 / 16);

struct PartitionCheck {
    int samples = 0;
    double max_error = 0.0;  // |lattice sum / psi_x - 1| over the nondegenerate support
};
PartitionCheck check_partition(const PhaseFunction& phase, const TubeFamily& fam, int samples, double omega_max = 0.25);

// l1 is the norm for the disk cutoff a_k 2^{-(n-1)k/2} psi_{x,omega_D} / psi_x, i.e. the tube
// piece without the L1 normalisation of psi_{x,omega_D}
struct TubeKernelResult {
    double l1 = 0.0;
    double normalized = 0.0;     // 2^{(n-1)k/2} l1
    double disk_fraction = 0.0;  // L1 share inside the 8x eccentric disk
    double leakage = 0.0;
};

TubeKernelResult tube_kernel_l1(const PhaseFunction& phase, const TubePiece& tube, const Vec& y,
                                const KernelRowOptions& opts = {}, double dilation = 8.0);

struct TaylorRemainderReport {
    int k = 0;
    Vec omega_D, x;
    int samples = 0;
    double max_abs = 0.0;          // max |e|
    double max_lambda_abs = 0.0;   // max 2^k |e|
    double max_leading_dev = 0.0;  // max |e - leading| 2^{3k/2}
};

TaylorRemainderReport taylor_remainder_scan(const PhaseFunction& phase, const TubePiece& tube, int samples,
                                            std::uint64_t seed = 13);

}  // namespace fiolab
