#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace fiolab {

// small fixed-capacity vectors, n <= 3
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
// unbounded, for joint (x, xi) points
using DVec = Eigen::VectorXd;
using Complex = std::complex<double>;
using SpatialPoint = Vec;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class AccuracyError : public Error { using Error::Error; };
class ResourceError : public Error { using Error::Error; };
class AliasingError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class ConsistencyError : public Error { using Error::Error; };
class InternalError : public Error { using Error::Error; };

class InversionFailure : public Error {
public:
    InversionFailure(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

inline Vec vec2(double a, double b) { Vec v(2); v << a, b; return v; }
inline Vec vec3(double a, double b, double c) { Vec v(3); v << a, b, c; return v; }

// (omega, 1) lifted to the cone
inline Vec lift(const Vec& omega) {
    Vec xi(omega.size() + 1);
    xi.head(omega.size()) = omega;
    xi(omega.size()) = 1.0;
    return xi;
}

inline Complex cis(double turns) {
    const double a = kTwoPi * turns;
    return {std::cos(a), std::sin(a)};
}

// Halton points with a Cranley-Patterson shift, dimension <= 8
class Halton {
public:
    Halton(int dim, std::uint64_t seed);
    // point in [0,1)^dim
    std::vector<double> next();
    int dim() const { return dim_; }

private:
    int dim_;
    std::uint64_t index_ = 1;
    std::vector<double> shift_;
};

double radical_inverse(std::uint64_t i, int base);

}  // namespace fiolab
