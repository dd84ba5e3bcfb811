#pragma once

#include "fiolab/grid.hpp"
#include "fiolab/phase_geometry.hpp"
#include "fiolab/quadrature.hpp"
#include "fiolab/symbols.hpp"

#include <functional>
#include <memory>
#include <string>

namespace fiolab {

enum class Exec { serial, parallel };

// multiplier applied on the grid's dual lattice; nonzero values on the outer 2% of the
// lattice raise AliasingError unless check_band is false
GriddedFunction apply_multiplier(const GriddedFunction& f, const std::function<Complex(const Vec&)>& m,
                                 bool check_band = true);

// Tf(x) = sum_xi e^{2 pi i Phi(x,xi)} a(x,xi) fhat(xi) dxi over the dual lattice, O(N^{2n})
GriddedFunction apply_fio(const PhaseFunction& phase, const SymbolFunction& a, const GriddedFunction& f,
                          Exec exec = Exec::parallel, bool check_band = true);

enum class KernelMethod { automatic, multiplier, projective, direct };
std::string to_string(KernelMethod m);

// K(x) = int dOmega A(x,omega) r^{-n} G(Theta / r), Theta = Phi(x,(omega,1)) - y.(omega,1),
// r = |(omega,1)|, G the transform of t^{n-1} g(t). Omega panels are refined until each leaf
// holds at most two oscillations and skipped when |Theta/r| clears the support of G.
class ProjectiveKernel {
public:
    ProjectiveKernel(const PhaseFunction& phase, const ProjectiveAmplitude& amp, Vec y, double tolerance = 1e-10);
    Complex operator()(const Vec& x) const;
    double s_cutoff() const { return G_->cutoff(); }

private:
    const PhaseFunction& phase_;
    const ProjectiveAmplitude& amp_;
    Vec y_;
    int n_, d_;
    std::shared_ptr<RadialProfileTransform> G_;
    double hi_, hess_bound_, leaf_width_;
    Vec c_;
    double R_;
    Complex panel(const Vec& x, const Vec& pc, double hw) const;
    Complex leaf(const Vec& x, const Vec& pc, double hw) const;
};

// translation-invariant phase, or grad_x Phi independent of x, and an x-separable amplitude
bool multiplier_path_available(const PhaseFunction& phase, const ProjectiveAmplitude& amp);

// spectrum of the x-separable part: K = spatial(x) * inverse FT of this
Complex kernel_multiplier(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, const Vec& eta);

struct KernelRowOptions {
    KernelMethod method = KernelMethod::automatic;
    Exec exec = Exec::parallel;
    double oversample = 2.0;      // lattice Nyquist over the kernel's frequency extent
    double leak_tolerance = 1e-5; // L1 fraction allowed in the outer frame of the box
    int max_growth = 4;
    double max_points = 6e7;
    double table_tolerance = 1e-10;
};

struct KernelRow {
    GriddedFunction values;
    KernelMethod method = KernelMethod::automatic;
    double leakage = 0.0;  // frame L1 fraction of the final box
    double l1() const { return values.l1(); }
};

// bounding box of the singular set {x : grad_xi Phi(x, (omega,1)) = y} over the amplitude's omega support
struct Footprint {
    Vec lo, hi;
};
Footprint singular_footprint(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y);
// per-axis frequency extent of the kernel, max |grad_x Phi(x, xi)_i| over the support
Vec kernel_frequency_extent(const PhaseFunction& phase, const ProjectiveAmplitude& amp);
// box of the footprint grown by margin (clipped to the amplitude's x-support when clip is set)
GridSpec kernel_grid(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y, double margin,
                     double oversample, bool clip);

KernelRow kernel_row(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y,
                     const KernelRowOptions& opts = {});
// on a caller-supplied grid
KernelRow kernel_row_on(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y,
                        const GridSpec& grid, const KernelRowOptions& opts = {});

// brute-force oracle: tensor quadrature of e^{2 pi i (Phi(x,xi) - y.xi)} a(x,xi) over the xi-support box
OscResult kernel_point_oracle(const PhaseFunction& phase, const ProjectiveAmplitude& amp, const Vec& y,
                              const Vec& x, double points_per_wavelength = 6.0);

// fraction of L1 mass in the outer frame (fraction of each side) of the grid box;
// faces are ordered lo_0, hi_0, lo_1, ...
double frame_fraction(const GriddedFunction& f, double frame = 0.05, const std::array<bool, 6>& skip_face = {});

int fft_friendly(int n);

}  // namespace fiolab
