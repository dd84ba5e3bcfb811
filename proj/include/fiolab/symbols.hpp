#pragma once

#include "fiolab/core.hpp"
#include "fiolab/cutoffs.hpp"
#include "fiolab/phase_geometry.hpp"

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace fiolab {

class SymbolFunction {
public:
    virtual ~SymbolFunction() = default;
    virtual int dim() const = 0;
    virtual double order() const = 0;
    virtual Complex eval(const Vec& x, const Vec& xi) const = 0;
    // x-support is contained in [-w, w]^n
    virtual double x_half_width() const { return std::numeric_limits<double>::infinity(); }
    // declared C_{alpha,beta} for |alpha| = a, |beta| = b
    virtual double bound_constant(int a, int b) const;
};

// Symbols of the form A(x, omega) g(|xi|) on xi_n > 0. Kernel evaluation
// integrates the radial factor in closed form and the angular one by quadrature.
class ProjectiveAmplitude {
public:
    virtual ~ProjectiveAmplitude() = default;
    virtual int amp_dim() const = 0;
    virtual Complex angular(const Vec& x, const Vec& omega) const = 0;
    virtual double radial(double t) const = 0;
    virtual double radial_lo() const = 0;
    virtual double radial_hi() const = 0;
    // A(x, .) vanishes for |omega - omega_center()| > omega_radius()
    virtual double omega_radius() const = 0;
    virtual Vec omega_center() const { return Vec::Zero(amp_dim() - 1); }
    // finest omega scale on which A varies; sets the omega panel width
    virtual double omega_scale() const { return 1.0 / 64; }
    virtual double amp_x_half_width() const { return std::numeric_limits<double>::infinity(); }
    // A(x, omega) = spatial(x) * angular_only(omega)
    virtual bool x_separable() const { return false; }
    virtual double spatial(const Vec& x) const;
    virtual Complex angular_only(const Vec& omega) const;
    Complex eval_factored(const Vec& x, const Vec& xi) const;
};

class ConstantSymbol final : public SymbolFunction {
public:
    ConstantSymbol(int n, Complex c) : n_(n), c_(c) {}
    int dim() const override { return n_; }
    double order() const override { return 0.0; }
    Complex eval(const Vec&, const Vec&) const override { return c_; }
    double bound_constant(int a, int b) const override { return (a + b == 0) ? std::abs(c_) : 0.0; }

private:
    int n_;
    Complex c_;
};

// a(x, xi) = chi(x) (1+|xi|^2)^{m/2} (1 - phi_0(xi / 2^{k_min})) cone(omega)
struct StandardSymbolParams {
    int n = 2;
    double order = -0.5;
    double spatial_plateau = 0.5;  // <= 0: no spatial cutoff
    bool low_frequency_cutoff = true;
    int k_min = 3;
    double omega_max = 0.25;  // <= 0: no cone cutoff
};

class StandardSymbol final : public SymbolFunction, public ProjectiveAmplitude {
public:
    explicit StandardSymbol(StandardSymbolParams p);
    static StandardSymbolParams defaults(int n);

    int dim() const override { return p_.n; }
    double order() const override { return p_.order; }
    Complex eval(const Vec& x, const Vec& xi) const override;
    double x_half_width() const override;

    int amp_dim() const override { return p_.n; }
    Complex angular(const Vec& x, const Vec& omega) const override;
    double radial(double t) const override;
    double radial_lo() const override;
    double radial_hi() const override { return std::numeric_limits<double>::infinity(); }
    double omega_radius() const override;
    double omega_scale() const override;
    double amp_x_half_width() const override { return x_half_width(); }
    bool x_separable() const override { return true; }
    double spatial(const Vec& x) const override;
    Complex angular_only(const Vec& omega) const override;
    double cone_factor(const Vec& omega) const;

    const StandardSymbolParams& params() const { return p_; }

private:
    StandardSymbolParams p_;
};

using SymbolPtr = std::shared_ptr<const StandardSymbol>;

enum class PieceKind { full, degenerate, nondegenerate };
std::string to_string(PieceKind k);

// a(x, xi) c(J(x, omega)) eta_k(|xi|)
class DyadicSymbolPiece final : public SymbolFunction, public ProjectiveAmplitude {
public:
    DyadicSymbolPiece(SymbolPtr base, PhasePtr phase, int k, double eps, PieceKind kind);

    int dim() const override { return base_->dim(); }
    double order() const override { return base_->order(); }
    Complex eval(const Vec& x, const Vec& xi) const override;
    double x_half_width() const override { return base_->x_half_width(); }

    int amp_dim() const override { return base_->dim(); }
    Complex angular(const Vec& x, const Vec& omega) const override;
    double radial(double t) const override;
    double radial_lo() const override;
    double radial_hi() const override;
    double omega_radius() const override { return base_->omega_radius(); }
    double omega_scale() const override;
    double amp_x_half_width() const override { return base_->x_half_width(); }
    bool x_separable() const override;
    double spatial(const Vec& x) const override { return base_->spatial(x); }
    Complex angular_only(const Vec& omega) const override;

    double cutoff(double J) const;
    double constant_cutoff() const { return constant_cutoff_; }
    int k() const { return k_; }
    double eps() const { return eps_; }
    PieceKind kind() const { return kind_; }
    const PhasePtr& phase() const { return phase_; }
    const SymbolPtr& base() const { return base_; }

private:
    SymbolPtr base_;
    PhasePtr phase_;
    int k_;
    double eps_;
    PieceKind kind_;
    // value of the curvature cutoff when it is constant over the support, else -1
    double constant_cutoff_ = -1.0;
};

using PiecePtr = std::shared_ptr<const DyadicSymbolPiece>;

std::pair<PiecePtr, PiecePtr> dyadic_pieces(SymbolPtr a, PhasePtr phase, int k, double eps);

// psi_{x,omega_D}(omega) = 2^{(n-1)k/2} rho(2^k Q(v,v)) det(Q)^{1/2}, v = omega - omega_D
class PartitionWeight {
public:
    PartitionWeight(const PhaseFunction& phase, const Vec& x, const Vec& omega_D, int k, double eps);
    explicit PartitionWeight(CurvatureData c);
    double eval(const Vec& omega) const;
    const Vec& center() const { return center_; }
    const CurvatureData& curvature() const { return c_; }
    // support is inside |omega - omega_D| <= support_radius()
    double support_radius() const;
    // rho = 1 on |omega - omega_D| <= plateau_radius()
    double plateau_radius() const;
    // semi-axes of the support ellipsoid
    Vec radii() const;

private:
    CurvatureData c_;
    Vec center_;
    double scale_;
    double sqrt_det_;
};

// integral of rho(|u|^2) over R^d
double frozen_psi_constant(int d);

struct PsiResult {
    double value = 0.0;
    double error_estimate = 0.0;
    int nodes = 0;
};

struct PsiOptions {
    int gl_points = 24;
    double tolerance = 1e-4;
    int max_panels = 16;
};

PsiResult psi_average(const PhaseFunction& phase, const Vec& x, const Vec& omega, int k, double eps,
                      const PsiOptions& opts = {});

// tube piece a_k psi_{x,omega_D}(omega) / psi_x(omega), with Q and psi_x frozen at x
class TubePiece final : public SymbolFunction, public ProjectiveAmplitude {
public:
    TubePiece(PiecePtr piece, Vec omega_D, Vec x);

    int dim() const override { return piece_->dim(); }
    double order() const override { return piece_->order(); }
    Complex eval(const Vec& x, const Vec& xi) const override;
    double x_half_width() const override { return piece_->x_half_width(); }

    int amp_dim() const override { return piece_->dim(); }
    Complex angular(const Vec& x, const Vec& omega) const override;
    double radial(double t) const override { return piece_->radial(t); }
    double radial_lo() const override { return piece_->radial_lo(); }
    double radial_hi() const override { return piece_->radial_hi(); }
    double omega_radius() const override;
    Vec omega_center() const override { return omega_D_; }
    double omega_scale() const override;
    double amp_x_half_width() const override { return piece_->x_half_width(); }
    bool x_separable() const override { return piece_->x_separable(); }
    double spatial(const Vec& x) const override { return piece_->spatial(x); }
    Complex angular_only(const Vec& omega) const override;

    // b(lambda, zeta) = 2^{-(n-1)k/2} lambda^{n-1} a_k(x, lambda(omega,1)) rho(|zeta|^2) / psi_x(omega)
    Complex rescaled(double lambda, const Vec& zeta) const;
    Vec omega_of(const Vec& zeta) const;

    double psi_x(const Vec& omega) const;
    const PartitionWeight& weight() const { return weight_; }
    const Vec& center() const { return omega_D_; }
    const Vec& frozen_x() const { return x_; }
    int k() const { return piece_->k(); }
    const PiecePtr& piece() const { return piece_; }

private:
    PiecePtr piece_;
    Vec omega_D_;
    Vec x_;
    PartitionWeight weight_;
    // psi_x tabulated on a square grid around omega_D
    int table_n_ = 0;
    double table_lo_[2] = {0, 0};
    double table_h_ = 0.0;
    std::vector<double> table_;
};

// --- symbol bound verification ----------------------------------------------

struct SampleDomain {
    double x_half_width = 1.0;
    double omega_max = 0.25;
    double lambda_lo = 8.0;
    double lambda_hi = 4096.0;
};

struct SymbolBoundsOptions {
    int max_order = 2;
    int samples = 200;
    std::uint64_t seed = 7;
    SampleDomain domain;
    double h_x = 0.02;
    double h_xi_rel = 0.004;
};

struct SymbolBoundsEntry {
    std::array<int, 3> alpha{0, 0, 0};
    std::array<int, 3> beta{0, 0, 0};
    int alpha_order = 0;
    int beta_order = 0;
    double sup_normalized = 0.0;
    double declared = 0.0;
    bool violated = false;
};

struct SymbolBoundsReport {
    std::vector<SymbolBoundsEntry> entries;
    int violations = 0;
    // sup over entries with given |beta| (index) of the normalized value
    std::vector<double> sup_by_beta_order;
    std::vector<double> sup_by_alpha_order;
};

SymbolBoundsReport verify_symbol_bounds(const SymbolFunction& s, const SymbolBoundsOptions& opts);

struct RescaledBoundsReport {
    // sup |d_lambda^b d_zeta^d b| 2^{k b}, indexed [b][d], b, d <= 2
    double sup[3][3] = {{0}};
};

RescaledBoundsReport verify_rescaled_bounds(const TubePiece& tube, int samples, std::uint64_t seed = 11);

// mixed finite-difference derivative of f along coordinates with the given multiplicities
Complex mixed_difference(const std::function<Complex(const DVec&)>& f, const DVec& p,
                        const std::vector<int>& multiplicity, const std::vector<double>& step);

}  // namespace fiolab
