#pragma once

#include "fiolab/core.hpp"

#include <cmath>

namespace fiolab {

// h(s) = exp(-1/s) for s > 0
inline double smooth_h(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }

// radial transition: 1 on [0,1], 0 on [2,inf)
inline double rho(double t) {
    t = std::abs(t);
    if (t <= 1.0) return 1.0;
    if (t >= 2.0) return 0.0;
    const double a = smooth_h(2.0 - t), b = smooth_h(t - 1.0);
    return a / (a + b);
}

// phi_k(r) = rho(r / 2^k), k may be fractional or negative
inline double phi_k(double k, double r) { return rho(r * std::exp2(-k)); }
inline double eta_k(double k, double r) { return phi_k(k, r) - phi_k(k - 1.0, r); }

// degeneracy cutoffs on the curvature J
inline double deg_cutoff(double J, int k, double eps) { return rho(std::abs(J) * std::exp2(eps * k)); }
inline double nondeg_cutoff(double J, int k, double eps) { return 1.0 - deg_cutoff(J, k, eps); }

class BumpProfile {
public:
    static constexpr double inner_radius = 1.0;
    static constexpr double outer_radius = 2.0;
    double operator()(double t) const { return rho(t); }
    double eval(const Vec& xi) const { return rho(xi.norm()); }
    // derivative of order 0..4 by central differences
    double derivative(double t, int order) const;
};

double bump_eval(const BumpProfile& profile, double t);

class CutoffFamily {
public:
    explicit CutoffFamily(BumpProfile p = {}) : profile_(p) {}
    double phi(double k, double r) const { return phi_k(k, r); }
    double eta(double k, double r) const { return eta_k(k, r); }
    double phi(double k, const Vec& xi) const { return phi_k(k, xi.norm()); }
    double eta(double k, const Vec& xi) const { return eta_k(k, xi.norm()); }
    // sum of eta_j for j = a+1..b, accumulated in increasing j
    double eta_sum(int a, int b, double r) const;
    const BumpProfile& profile() const { return profile_; }

private:
    BumpProfile profile_;
};

// smooth spatial cutoff prod rho(|x_i| / plateau): 1 on [-plateau, plateau]^n
inline double box_cutoff(const Vec& x, double plateau) {
    double v = 1.0;
    for (int i = 0; i < x.size() && v != 0.0; ++i) v *= rho(x(i) / plateau);
    return v;
}

}  // namespace fiolab
