#include "fiolab/cutoffs.hpp"

namespace fiolab {

double BumpProfile::derivative(double t, int order) const {
    if (order < 0 || order > 4) throw PreconditionError("bump derivative: order must be in [0,4]");
    const double h = 1e-2;
    switch (order) {
        case 0: return rho(t);
        case 1: return (rho(t + h) - rho(t - h)) / (2 * h);
        case 2: return (rho(t + h) - 2 * rho(t) + rho(t - h)) / (h * h);
        case 3: return (rho(t + 2 * h) - 2 * rho(t + h) + 2 * rho(t - h) - rho(t - 2 * h)) / (2 * h * h * h);
        default:
            return (rho(t + 2 * h) - 4 * rho(t + h) + 6 * rho(t) - 4 * rho(t - h) + rho(t - 2 * h)) / (h * h * h * h);
    }
}

double bump_eval(const BumpProfile& profile, double t) { return profile(t); }

double CutoffFamily::eta_sum(int a, int b, double r) const {
    double s = 0.0;
    for (int j = a + 1; j <= b; ++j) s += eta(j, r);
    return s;
}

}  // namespace fiolab
