#pragma once

#include "fiolab/core.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace fiolab {

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [-1, 1]
const GaussRule& gauss_legendre(int n);
GaussRule composite_gauss_legendre(double a, double b, int panels, int points);

// cubic Catmull-Rom through p[0..3], t in [0,1] between p[1] and p[2]
template <class T>
inline T catmull_rom(const T* p, double t) {
    const double t2 = t * t, t3 = t2 * t;
    return p[1] + 0.5 * t * (p[2] - p[0]) + t2 * (p[0] - 2.5 * p[1] + 2.0 * p[2] - 0.5 * p[3]) +
           0.5 * t3 * (3.0 * (p[1] - p[2]) + p[3] - p[0]);
}

// integrand amplitude(t) exp(2 pi i phase(t)) over a box
struct OscIntegralSpec {
    int dim = 1;
    std::function<double(const Vec&)> phase;
    std::function<Complex(const Vec&)> amplitude;
    Vec lo, hi;
    double oscillation_scale = 0.0;  // max |grad phase|, cycles per unit length
    double amplitude_scale = 0.0;    // smallest length on which amplitude varies (0: ignore)
};

struct OscResult {
    Complex value;
    double error_estimate = 0.0;
    bool reliable = true;
    long long points = 0;
};

struct OscOptions {
    long long max_points = 400'000'000;
    bool parallel = true;
};

OscResult oscillatory_quadrature(const OscIntegralSpec& spec, double points_per_wavelength, const OscOptions& opts = {});

// amp e^{mu pi i/4} |det F|^{-1/2} lambda^{-d/2}: leading term of the integral of exp(pi i lambda F(t,t)) amp
Complex stationary_phase_reference(const Mat& form, double lambda, Complex amplitude_at_center);

// signature of a symmetric matrix
int signature(const Mat& form, double threshold = 0.0);

// uniform table of complex values and derivatives, cubic Hermite interpolation, zero outside
class HermiteTable {
public:
    HermiteTable() = default;
    HermiteTable(double x0, double h, std::vector<Complex> values, std::vector<Complex> derivs);
    Complex operator()(double x) const {
        const double t = (x - x0_) * inv_h_;
        if (!(t >= 0.0) || t >= last_) return 0.0;
        const auto i = static_cast<std::size_t>(t);
        const double s = t - static_cast<double>(i);
        const double s2 = s * s, s3 = s2 * s;
        const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
        return h00 * v_[i] + h10 * h_ * d_[i] + h01 * v_[i + 1] + h11 * h_ * d_[i + 1];
    }
    double lo() const { return x0_; }
    double hi() const { return x0_ + last_ * h_; }
    double spacing() const { return h_; }
    std::size_t size() const { return v_.size(); }

private:
    double x0_ = 0.0, h_ = 1.0, inv_h_ = 1.0, last_ = 0.0;
    std::vector<Complex> v_, d_;
};

// G(s) = int_0^inf t^{n-1} g(t) e^{2 pi i t s} dt for g supported in [lo, hi],
// stored demodulated by e^{2 pi i t_c s}
class RadialProfileTransform {
public:
    RadialProfileTransform(int n, std::function<double(double)> g, double lo, double hi, double tolerance = 1e-10);
    Complex operator()(double s) const {
        if (s <= -S_ || s >= S_) return 0.0;
        return table_(s) * cis(tc_ * s);
    }
    // the demodulated factor, for callers that carry the carrier themselves
    Complex envelope(double s) const { return table_(s); }
    double carrier() const { return tc_; }
    double cutoff() const { return S_; }
    Complex at_zero() const { return table_(0.0); }
    // direct quadrature, used for tabulation and as an oracle
    Complex direct(double s) const;

private:
    int n_;
    std::function<double(double)> g_;
    double lo_, hi_, tc_;
    double S_ = 0.0;
    GaussRule rule_;
    std::vector<double> gw_;  // t^{n-1} g(t) w
    HermiteTable table_;
};

// radial inverse Fourier transform of p(|xi|) in R^n, p supported in [0, pmax]
class RadialInverseTransform {
public:
    RadialInverseTransform(int n, std::function<double(double)> p, double pmax, double tolerance = 1e-9);
    double operator()(double r) const {
        if (r >= R_) return 0.0;
        return table_(r).real();
    }
    double cutoff() const { return R_; }
    double direct(double r) const;

private:
    int n_;
    double R_ = 0.0;
    GaussRule rule_;
    std::vector<double> pw_;
    HermiteTable table_;
    std::pair<double, double> value_and_derivative(double r) const;
};

// shared tables for eta_0 and phi_0 in dimension n
const RadialInverseTransform& eta0_inverse(int n);
const RadialInverseTransform& phi0_inverse(int n);

}  // namespace fiolab
