#include "fiolab/quadrature.hpp"
#include "fiolab/cutoffs.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>

namespace fiolab {

namespace {

GaussRule build_gauss_legendre(int n) {
    GaussRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
    if (n < 1 || n > 512) throw PreconditionError("gauss_legendre: n must be in [1,512]");
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GaussRule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussRule>(build_gauss_legendre(n));
    return *slot;
}

GaussRule composite_gauss_legendre(double a, double b, int panels, int points) {
    const GaussRule& g = gauss_legendre(points);
    GaussRule r;
    r.nodes.reserve(static_cast<std::size_t>(panels) * points);
    r.weights.reserve(static_cast<std::size_t>(panels) * points);
    const double w = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double c = a + (p + 0.5) * w;
        for (int i = 0; i < points; ++i) {
            r.nodes.push_back(c + 0.5 * w * g.nodes[i]);
            r.weights.push_back(0.5 * w * g.weights[i]);
        }
    }
    return r;
}

// --- brute-force oscillatory integrals --------------------------------------

OscResult oscillatory_quadrature(const OscIntegralSpec& spec, double ppw, const OscOptions& opts) {
    if (!(ppw >= 4.0)) throw PreconditionError("oscillatory_quadrature: points_per_wavelength must be >= 4");
    const int d = spec.dim;
    if (d < 1 || d > 3 || spec.lo.size() != d || spec.hi.size() != d)
        throw PreconditionError("oscillatory_quadrature: bad domain");
    double h = std::numeric_limits<double>::infinity();
    if (spec.oscillation_scale > 0) h = 1.0 / (spec.oscillation_scale * ppw);
    if (spec.amplitude_scale > 0) h = std::min(h, spec.amplitude_scale / ppw);
    int Nc[3] = {1, 1, 1}, Nf[3] = {1, 1, 1};
    double hf[3] = {0, 0, 0};
    long double total = 1;
    for (int i = 0; i < d; ++i) {
        const double L = spec.hi(i) - spec.lo(i);
        if (!(L > 0)) throw PreconditionError("oscillatory_quadrature: empty domain");
        Nc[i] = std::max(2, static_cast<int>(std::ceil(L / h)));
        Nf[i] = 2 * Nc[i];
        hf[i] = L / Nf[i];
        total *= (Nf[i] + 1);
    }
    if (total > opts.max_points) throw ResourceError("oscillatory_quadrature: point budget exceeded");

    const int n0 = Nf[0] + 1;
    std::vector<Complex> fine(n0), coarse(n0);
    std::vector<double> mass(n0);
    auto wt = [&](int i, int j, bool c) {
        const int N = Nf[i];
        const double step = c ? 2 * hf[i] : hf[i];
        return (j == 0 || j == N) ? 0.5 * step : step;
    };
    auto slab = [&](int i0) {
        Vec t(d);
        Complex sf = 0.0, sc = 0.0;
        double m = 0.0;
        t(0) = spec.lo(0) + i0 * hf[0];
        const int n1 = d > 1 ? Nf[1] + 1 : 1, n2 = d > 2 ? Nf[2] + 1 : 1;
        for (int i1 = 0; i1 < n1; ++i1) {
            if (d > 1) t(1) = spec.lo(1) + i1 * hf[1];
            for (int i2 = 0; i2 < n2; ++i2) {
                if (d > 2) t(2) = spec.lo(2) + i2 * hf[2];
                const Complex a = spec.amplitude(t);
                if (a == 0.0) continue;
                const Complex v = a * cis(spec.phase(t));
                double w = wt(0, i0, false);
                if (d > 1) w *= wt(1, i1, false);
                if (d > 2) w *= wt(2, i2, false);
                sf += w * v;
                m += w * std::abs(a);
                if (i0 % 2 == 0 && i1 % 2 == 0 && i2 % 2 == 0) {
                    double wc = wt(0, i0, true);
                    if (d > 1) wc *= wt(1, i1, true);
                    if (d > 2) wc *= wt(2, i2, true);
                    sc += wc * v;
                }
            }
        }
        fine[i0] = sf;
        coarse[i0] = sc;
        mass[i0] = m;
    };
    if (opts.parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (int i0 = 0; i0 < n0; ++i0) slab(i0);
    } else {
        for (int i0 = 0; i0 < n0; ++i0) slab(i0);
    }
    OscResult r;
    Complex sc = 0.0;
    double m = 0.0;
    for (int i = 0; i < n0; ++i) {
        r.value += fine[i];
        sc += coarse[i];
        m += mass[i];
    }
    r.error_estimate = std::abs(r.value - sc);
    r.reliable = r.error_estimate <= 0.01 * std::abs(r.value) + 1e-13 * m;
    r.points = static_cast<long long>(total);
    return r;
}

int signature(const Mat& form, double threshold) {
    Eigen::SelfAdjointEigenSolver<Mat> es(form);
    int s = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double l = es.eigenvalues()(i);
        if (l > threshold) ++s;
        else if (l < -threshold) --s;
    }
    return s;
}

Complex stationary_phase_reference(const Mat& form, double lambda, Complex amp) {
    if (form.rows() != form.cols() || form.rows() < 1) throw PreconditionError("stationary_phase_reference: bad form");
    const double det = form.determinant();
    if (!(std::abs(det) >= 1e-8)) throw DomainError("stationary_phase_reference: degenerate quadratic form");
    const int mu = signature(form);
    const int d = static_cast<int>(form.rows());
    return amp * cis(mu / 8.0) / std::sqrt(std::abs(det)) * std::pow(lambda, -0.5 * d);
}

// --- tables -----------------------------------------------------------------

HermiteTable::HermiteTable(double x0, double h, std::vector<Complex> values, std::vector<Complex> derivs)
    : x0_(x0), h_(h), inv_h_(1.0 / h), v_(std::move(values)), d_(std::move(derivs)) {
    if (v_.size() < 2 || v_.size() != d_.size()) throw PreconditionError("HermiteTable: need matching values");
    last_ = static_cast<double>(v_.size() - 1);
}

RadialProfileTransform::RadialProfileTransform(int n, std::function<double(double)> g, double lo, double hi,
                                               double tolerance)
    : n_(n), g_(std::move(g)), lo_(lo), hi_(hi), tc_(0.5 * (lo + hi)) {
    if (!(hi > lo) || lo < 0) throw PreconditionError("RadialProfileTransform: bad support");
    const double w = hi - lo;
    auto build_rule = [&](double smax) {
        const int panels = static_cast<int>(std::ceil(smax * w * 1.5)) + 24;
        rule_ = composite_gauss_legendre(lo, hi, panels, 16);
        gw_.resize(rule_.nodes.size());
        for (std::size_t j = 0; j < gw_.size(); ++j) {
            const double t = rule_.nodes[j];
            gw_[j] = rule_.weights[j] * std::pow(t, n_ - 1) * g_(t);
        }
    };
    // coarse scan for the decay cutoff
    const double smax = 600.0 / w;
    build_rule(smax);
    double h0 = 0.0;
    for (double v : gw_) h0 += std::abs(v);
    if (h0 == 0.0) {
        S_ = 0.0;
        table_ = HermiteTable(-1.0, 1.0, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
        return;
    }
    const double coarse = 0.25 / w;
    double last = 0.0;
    for (double s = 0.0; s <= smax && s < last + 16.0 / w; s += coarse) {
        const double a = std::max(std::abs(direct(s)), std::abs(direct(-s)));
        if (a > tolerance * h0) last = s;
    }
    if (last >= smax - 16.0 / w) throw AccuracyError("RadialProfileTransform: transform does not decay within range");
    S_ = last + 2 * coarse;
    build_rule(S_);

    // table with spacing 1/(16 w): 32 samples per period of the envelope
    const double dh = 1.0 / (16.0 * w);
    const int half = static_cast<int>(std::ceil(S_ / dh)) + 2;
    const int cnt = 2 * half + 1;
    std::vector<Complex> val(cnt), der(cnt);
    const std::size_t m = gw_.size();
    std::vector<Complex> rot(m), cur(m);
    for (std::size_t j = 0; j < m; ++j) {
        rot[j] = cis((rule_.nodes[j] - tc_) * dh);
        cur[j] = cis((rule_.nodes[j] - tc_) * (-half * dh));
    }
    for (int i = 0; i < cnt; ++i) {
        Complex v = 0.0, dv = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const Complex e = gw_[j] * cur[j];
            v += e;
            dv += e * (rule_.nodes[j] - tc_);
            cur[j] *= rot[j];
        }
        val[i] = v;
        der[i] = dv * Complex(0.0, kTwoPi);
        if (i % 64 == 63) {  // refresh against drift
            for (std::size_t j = 0; j < m; ++j) cur[j] = cis((rule_.nodes[j] - tc_) * ((i + 1 - half) * dh));
        }
    }
    table_ = HermiteTable(-half * dh, dh, std::move(val), std::move(der));
}

Complex RadialProfileTransform::direct(double s) const {
    Complex v = 0.0;
    for (std::size_t j = 0; j < gw_.size(); ++j) v += gw_[j] * cis((rule_.nodes[j] - tc_) * s);
    return v;
}

RadialInverseTransform::RadialInverseTransform(int n, std::function<double(double)> p, double pmax, double tolerance)
    : n_(n) {
    if (n < 2 || n > 3) throw PreconditionError("RadialInverseTransform: n must be 2 or 3");
    // n = 2 goes through the Abel projection P(s) = int p(sqrt(s^2+t^2)) dt,
    // so the transform is a cosine integral of P and needs no Bessel functions
    const GaussRule inner = composite_gauss_legendre(0.0, 1.0, 32, 16);
    auto projected = [&](double s) {
        const double top = std::sqrt(std::max(0.0, pmax * pmax - s * s));
        double v = 0.0;
        for (std::size_t i = 0; i < inner.nodes.size(); ++i) {
            const double t = top * inner.nodes[i];
            v += inner.weights[i] * p(std::sqrt(s * s + t * t));
        }
        return 2.0 * top * v;
    };
    auto build_rule = [&](double rmax) {
        const int panels = static_cast<int>(std::ceil(rmax * pmax * 1.2)) + 16;
        rule_ = composite_gauss_legendre(0.0, pmax, panels, 16);
        pw_.resize(rule_.nodes.size());
        for (std::size_t j = 0; j < pw_.size(); ++j)
            pw_[j] = rule_.weights[j] * (n_ == 2 ? projected(rule_.nodes[j]) : p(rule_.nodes[j]));
    };
    const double rmax = 160.0;
    build_rule(rmax);
    const double v0 = std::abs(value_and_derivative(0.0).first);
    // scan outward until the profile stays below tolerance for 16 units
    double last = 0.0;
    const double coarse = 0.125;
    for (double r = coarse; r <= rmax && r < last + 16.0; r += coarse) {
        if (std::abs(value_and_derivative(r).first) > tolerance * v0) last = r;
    }
    if (last > rmax - 16.0) throw AccuracyError("RadialInverseTransform: profile does not decay within range");
    R_ = last + 1.0;
    build_rule(R_);
    const double dh = 1.0 / (32.0 * pmax);
    const int cnt = static_cast<int>(std::ceil(R_ / dh)) + 2;
    std::vector<Complex> val(cnt), der(cnt);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < cnt; ++i) {
        auto [v, dv] = value_and_derivative(i * dh);
        val[i] = v;
        der[i] = dv;
    }
    table_ = HermiteTable(0.0, dh, std::move(val), std::move(der));
}

std::pair<double, double> RadialInverseTransform::value_and_derivative(double r) const {
    double v = 0.0, dv = 0.0;
    if (n_ == 2) {
        // 2 int_0^pmax P(s) cos(2 pi r s) ds
        for (std::size_t j = 0; j < pw_.size(); ++j) {
            if (pw_[j] == 0.0) continue;
            const double t = rule_.nodes[j];
            const double a = kTwoPi * r * t;
            v += pw_[j] * std::cos(a);
            dv -= pw_[j] * kTwoPi * t * std::sin(a);
        }
        return {2 * v, 2 * dv};
    }
    // n = 3: 4 pi int p(t) t^2 sinc(2 pi r t) dt
    for (std::size_t j = 0; j < pw_.size(); ++j) {
        if (pw_[j] == 0.0) continue;
        const double t = rule_.nodes[j];
        const double a = kTwoPi * r * t;
        if (a < 1e-4) {
            v += pw_[j] * t * t * (1.0 - a * a / 6.0);
            dv += pw_[j] * t * t * (-a / 3.0) * kTwoPi * t;
        } else {
            const double s = std::sin(a), c = std::cos(a);
            v += pw_[j] * t * t * s / a;
            dv += pw_[j] * t * t * (c / a - s / (a * a)) * kTwoPi * t;
        }
    }
    return {4 * kPi * v, 4 * kPi * dv};
}

double RadialInverseTransform::direct(double r) const { return value_and_derivative(r).first; }

const RadialInverseTransform& eta0_inverse(int n) {
    if (n == 2) {
        static const RadialInverseTransform t2(2, [](double t) { return rho(t) - rho(2 * t); }, 2.0);
        return t2;
    }
    static const RadialInverseTransform t3(3, [](double t) { return rho(t) - rho(2 * t); }, 2.0);
    return t3;
}

const RadialInverseTransform& phi0_inverse(int n) {
    if (n == 2) {
        static const RadialInverseTransform t2(2, [](double t) { return rho(t); }, 2.0);
        return t2;
    }
    static const RadialInverseTransform t3(3, [](double t) { return rho(t); }, 2.0);
    return t3;
}

}  // namespace fiolab
