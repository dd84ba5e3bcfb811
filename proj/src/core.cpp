#include "fiolab/core.hpp"

#include <random>

namespace fiolab {

double radical_inverse(std::uint64_t i, int base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

Halton::Halton(int dim, std::uint64_t seed) : dim_(dim), shift_(dim, 0.0) {
    if (dim < 1 || dim > 8) throw PreconditionError("Halton: dimension must be in [1,8]");
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& s : shift_) s = u(rng);
    }
}

std::vector<double> Halton::next() {
    static constexpr int primes[8] = {2, 3, 5, 7, 11, 13, 17, 19};
    std::vector<double> p(dim_);
    for (int d = 0; d < dim_; ++d) {
        double v = radical_inverse(index_, primes[d]) + shift_[d];
        p[d] = v - std::floor(v);
    }
    ++index_;
    return p;
}

}  // namespace fiolab
