#pragma once

#include "fiolab/core.hpp"

#include <map>
#include <optional>
#include <memory>
#include <string>

namespace fiolab {

enum class DerivativeMode { closed_form, finite_difference };

struct ConeSpec {
    double lambda_min = 8.0;
    double omega_max = 0.25;

    void validate() const;
    // angular membership only: xi_n > 0 and |omega| <= omega_max
    bool contains_direction(const Vec& xi) const;
    bool contains(const Vec& xi) const;
};

class FrequencyPoint {
public:
    explicit FrequencyPoint(Vec xi);
    static FrequencyPoint projective(double lambda, const Vec& omega);

    const Vec& cartesian() const { return xi_; }
    int dim() const { return static_cast<int>(xi_.size()); }
    double lambda() const;
    Vec omega() const;

private:
    Vec xi_;
};

// Degree-one homogeneous phase Phi(x, xi) on a cone around e_n.
// Derivatives come from the closed forms of the subclass, or from
// fourth-order central differences of eval() when the mode says so.
class PhaseFunction {
public:
    explicit PhaseFunction(int n);
    virtual ~PhaseFunction() = default;

    int dim() const { return n_; }
    virtual std::string name() const = 0;
    virtual std::map<std::string, double> parameters() const { return {}; }

    virtual double eval(const Vec& x, const Vec& xi) const = 0;
    Vec grad_x(const Vec& x, const Vec& xi) const;
    Vec grad_xi(const Vec& x, const Vec& xi) const;
    Mat hess_xi(const Vec& x, const Vec& xi) const;
    // M_ij = d^2 Phi / dx_i dxi_j
    Mat mixed_hess(const Vec& x, const Vec& xi) const;

    // Phi = x.xi + phi(xi)
    virtual bool translation_invariant() const { return false; }
    virtual double symbol_phase(const Vec& xi) const;
    // grad_x Phi(x, xi) does not depend on x
    virtual bool x_independent_gradient() const { return translation_invariant(); }
    // c(x) when Phi = x.xi + c(x) phi(xi) with c(0) = 1, so grad_xi Phi(x, .) = x + c(x) grad_xi Phi(0, .)
    virtual std::optional<double> radial_scale(const Vec&) const {
        if (translation_invariant()) return 1.0;
        return std::nullopt;
    }

    // projective conveniences, Phi(x, omega) := Phi(x, (omega, 1))
    double eval_omega(const Vec& x, const Vec& omega) const { return eval(x, lift(omega)); }
    Vec grad_xi_omega(const Vec& x, const Vec& omega) const { return grad_xi(x, lift(omega)); }
    Vec grad_omega(const Vec& x, const Vec& omega) const;
    Mat hess_omega(const Vec& x, const Vec& omega) const;

    void set_derivative_mode(DerivativeMode m) { mode_ = m; }
    DerivativeMode derivative_mode() const { return mode_; }

protected:
    virtual Vec grad_x_closed(const Vec& x, const Vec& xi) const = 0;
    virtual Vec grad_xi_closed(const Vec& x, const Vec& xi) const = 0;
    virtual Mat hess_xi_closed(const Vec& x, const Vec& xi) const = 0;
    virtual Mat mixed_hess_closed(const Vec& x, const Vec& xi) const = 0;

private:
    int n_;
    DerivativeMode mode_ = DerivativeMode::closed_form;
};

using PhasePtr = std::shared_ptr<const PhaseFunction>;

class HalfWavePhase final : public PhaseFunction {
public:
    explicit HalfWavePhase(int n) : PhaseFunction(n) {}
    std::string name() const override { return "halfwave"; }
    double eval(const Vec& x, const Vec& xi) const override;
    bool translation_invariant() const override { return true; }
    double symbol_phase(const Vec& xi) const override { return xi.norm(); }

protected:
    Vec grad_x_closed(const Vec& x, const Vec& xi) const override;
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat mixed_hess_closed(const Vec& x, const Vec& xi) const override;
};

class LinearPhase final : public PhaseFunction {
public:
    LinearPhase(int n, Vec shift);
    std::string name() const override { return "linear"; }
    std::map<std::string, double> parameters() const override;
    double eval(const Vec& x, const Vec& xi) const override;
    bool translation_invariant() const override { return true; }
    double symbol_phase(const Vec& xi) const override { return shift_.dot(xi); }
    const Vec& shift() const { return shift_; }

protected:
    Vec grad_x_closed(const Vec& x, const Vec& xi) const override;
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat mixed_hess_closed(const Vec& x, const Vec& xi) const override;

private:
    Vec shift_;
};

// Phi = x.xi + amp * xi_1^3 / xi_n^2
class CuspPhase final : public PhaseFunction {
public:
    CuspPhase(int n, double amp = 1.0) : PhaseFunction(n), amp_(amp) {}
    std::string name() const override { return "cusp"; }
    std::map<std::string, double> parameters() const override { return {{"amp", amp_}}; }
    double eval(const Vec& x, const Vec& xi) const override;
    bool translation_invariant() const override { return true; }
    double symbol_phase(const Vec& xi) const override;

protected:
    Vec grad_x_closed(const Vec& x, const Vec& xi) const override;
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat mixed_hess_closed(const Vec& x, const Vec& xi) const override;

private:
    double amp_;
};

// Phi = x.xi + c(x)|xi|, c(x) = 1 + b.x + gamma/2 |x|^2
class VarCoefPhase final : public PhaseFunction {
public:
    VarCoefPhase(int n, Vec b, double gamma = 0.0);
    std::string name() const override { return "varcoef"; }
    std::map<std::string, double> parameters() const override;
    double eval(const Vec& x, const Vec& xi) const override;
    bool x_independent_gradient() const override { return gamma_ == 0.0; }
    std::optional<double> radial_scale(const Vec& x) const override { return speed(x); }
    double speed(const Vec& x) const;
    Vec speed_gradient(const Vec& x) const;

protected:
    Vec grad_x_closed(const Vec& x, const Vec& xi) const override;
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat mixed_hess_closed(const Vec& x, const Vec& xi) const override;

private:
    Vec b_;
    double gamma_;
};

// n = 3 only: Phi = x.xi + (a1 xi_1^2 + a2 xi_2^2) / (2 xi_3)
class SaddlePhase final : public PhaseFunction {
public:
    SaddlePhase(double a1 = 1.0, double a2 = -1.0);
    std::string name() const override { return "saddle"; }
    std::map<std::string, double> parameters() const override { return {{"a1", a1_}, {"a2", a2_}}; }
    double eval(const Vec& x, const Vec& xi) const override;
    bool translation_invariant() const override { return true; }
    double symbol_phase(const Vec& xi) const override;

protected:
    Vec grad_x_closed(const Vec& x, const Vec& xi) const override;
    Vec grad_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat hess_xi_closed(const Vec& x, const Vec& xi) const override;
    Mat mixed_hess_closed(const Vec& x, const Vec& xi) const override;

private:
    double a1_, a2_;
};

// registry: "halfwave", "linear", "cusp", "varcoef", "saddle"
PhasePtr make_phase(const std::string& name, int n,
                    const std::map<std::string, double>& params = {},
                    DerivativeMode mode = DerivativeMode::closed_form);
std::vector<std::string> phase_names();

struct CurvatureData {
    Vec x;
    Vec omega;
    int k = 0;
    double eps = 0.0;
    Mat hessian;
    double J = 0.0;
    double regularizer = 0.0;  // 2^{-eps k}
    Vec hess_eigenvalues;
    Mat eigenvectors;
    Vec q_eigenvalues;  // eigenvalues of Q
    Mat Q;
    Mat Q_sqrt;
    Mat Q_inv_sqrt;
    double det_Q = 0.0;
    int mu = 0;                  // thresholded signature
    bool mu_indeterminate = false;
    int mu_sign = 0;             // signature from eigenvalue signs alone
};

double eval_phase(const PhaseFunction& phase, const Vec& x, const FrequencyPoint& xi,
                  const ConeSpec& cone = ConeSpec{8.0, 0.5});
double curvature_J(const PhaseFunction& phase, const Vec& x, const Vec& omega);
CurvatureData build_Q(const PhaseFunction& phase, const Vec& x, const Vec& omega, int k, double eps);
CurvatureData build_Q_from_hessian(const Mat& hessian, int k, double eps);

struct InversionOptions {
    double tolerance = 1e-10;  // relative to |zeta|
    int max_iterations = 50;
};

FrequencyPoint invert_grad_x(const PhaseFunction& phase, const Vec& x, const Vec& zeta,
                             const ConeSpec& cone = ConeSpec{8.0, 0.5},
                             const InversionOptions& opts = {});

struct PhaseReport {
    std::string phase;
    int samples = 0;
    double min_mixed_det = 0.0, max_mixed_det = 0.0;
    double min_grad_ratio = 0.0, max_grad_ratio = 0.0;
    double max_homogeneity_residual = 0.0;  // relative
    double max_euler_residual = 0.0;        // relative
    double max_fd_residual = 0.0;           // closed form vs finite differences, relative
    double max_q_domination_violation = 0.0;
    double max_inversion_residual = 0.0;    // |xi - xi*| / |xi*|
};

PhaseReport validate_phase(const PhaseFunction& phase, const ConeSpec& cone, int samples,
                           std::uint64_t seed = 1, int k = 8, double eps = 0.25);

// sample a point of the cone slice: x in [-1,1]^n, |omega| <= omega_max, lambda in [lo, hi]
struct ConeSample {
    Vec x;
    Vec omega;
    double lambda;
    Vec xi() const { return lambda * lift(omega); }
};
ConeSample sample_cone(const std::vector<double>& u, int n, double omega_max, double lambda_lo,
                       double lambda_hi, double x_half_width = 1.0);

}  // namespace fiolab
