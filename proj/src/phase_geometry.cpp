#include "fiolab/phase_geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <set>

namespace fiolab {

void ConeSpec::validate() const {
    if (!(lambda_min >= 4.0)) throw PreconditionError("cone: lambda_min must be >= 4");
    if (!(omega_max > 0.0 && omega_max <= 0.5)) throw PreconditionError("cone: omega_max must lie in (0, 1/2]");
}

bool ConeSpec::contains_direction(const Vec& xi) const {
    const int n = static_cast<int>(xi.size());
    const double xn = xi(n - 1);
    if (!(xn > 0.0)) return false;
    return xi.head(n - 1).norm() <= omega_max * xn * (1.0 + 1e-12);
}

bool ConeSpec::contains(const Vec& xi) const {
    return contains_direction(xi) && xi(xi.size() - 1) >= lambda_min;
}

FrequencyPoint::FrequencyPoint(Vec xi) : xi_(std::move(xi)) {
    if (xi_.size() < 2 || xi_.size() > 3) throw PreconditionError("frequency point: n must be 2 or 3");
    if (!xi_.allFinite()) throw DomainError("frequency point: non-finite coordinates");
}

FrequencyPoint FrequencyPoint::projective(double lambda, const Vec& omega) {
    return FrequencyPoint(lambda * lift(omega));
}

double FrequencyPoint::lambda() const { return xi_(xi_.size() - 1); }

Vec FrequencyPoint::omega() const {
    const double l = lambda();
    if (!(l > 0.0)) throw DomainError("projective coordinates need xi_n > 0");
    return xi_.head(xi_.size() - 1) / l;
}

// ---------------------------------------------------------------------------

PhaseFunction::PhaseFunction(int n) : n_(n) {
    if (n < 2 || n > 3) throw PreconditionError("phase: n must be 2 or 3");
}

namespace {

// fourth-order central first difference
template <class F>
double d1(const F& f, double h) {
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

double step_x(const Vec& x) { return 1e-3 * std::max(1.0, x.norm()); }
double step_xi(const Vec& xi) { return 1e-3 * std::max(1e-3, xi.norm()); }

}  // namespace

Vec PhaseFunction::grad_x(const Vec& x, const Vec& xi) const {
    if (mode_ == DerivativeMode::closed_form) return grad_x_closed(x, xi);
    Vec g(n_);
    const double h = step_x(x);
    for (int i = 0; i < n_; ++i) {
        g(i) = d1([&](double t) { Vec y = x; y(i) += t; return eval(y, xi); }, h);
    }
    return g;
}

Vec PhaseFunction::grad_xi(const Vec& x, const Vec& xi) const {
    if (mode_ == DerivativeMode::closed_form) return grad_xi_closed(x, xi);
    Vec g(n_);
    const double h = step_xi(xi);
    for (int i = 0; i < n_; ++i) {
        g(i) = d1([&](double t) { Vec e = xi; e(i) += t; return eval(x, e); }, h);
    }
    return g;
}

Mat PhaseFunction::hess_xi(const Vec& x, const Vec& xi) const {
    if (mode_ == DerivativeMode::closed_form) return hess_xi_closed(x, xi);
    Mat H(n_, n_);
    const double h = step_xi(xi);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j <= i; ++j) {
            H(i, j) = d1([&](double s) {
                return d1([&](double t) {
                    Vec e = xi;
                    e(i) += s;
                    e(j) += t;
                    return eval(x, e);
                }, h);
            }, h);
            H(j, i) = H(i, j);
        }
    }
    return H;
}

Mat PhaseFunction::mixed_hess(const Vec& x, const Vec& xi) const {
    if (mode_ == DerivativeMode::closed_form) return mixed_hess_closed(x, xi);
    Mat M(n_, n_);
    const double hx = step_x(x), hk = step_xi(xi);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) {
            M(i, j) = d1([&](double s) {
                return d1([&](double t) {
                    Vec y = x, e = xi;
                    y(i) += s;
                    e(j) += t;
                    return eval(y, e);
                }, hk);
            }, hx);
        }
    }
    return M;
}

double PhaseFunction::symbol_phase(const Vec&) const {
    throw PreconditionError("phase " + name() + " is not translation invariant");
}

Vec PhaseFunction::grad_omega(const Vec& x, const Vec& omega) const {
    return grad_xi(x, lift(omega)).head(n_ - 1);
}

Mat PhaseFunction::hess_omega(const Vec& x, const Vec& omega) const {
    return hess_xi(x, lift(omega)).topLeftCorner(n_ - 1, n_ - 1);
}

// --- half-wave --------------------------------------------------------------

double HalfWavePhase::eval(const Vec& x, const Vec& xi) const { return x.dot(xi) + xi.norm(); }
Vec HalfWavePhase::grad_x_closed(const Vec&, const Vec& xi) const { return xi; }
Vec HalfWavePhase::grad_xi_closed(const Vec& x, const Vec& xi) const { return x + xi / xi.norm(); }
Mat HalfWavePhase::hess_xi_closed(const Vec&, const Vec& xi) const {
    const double r = xi.norm();
    const Vec u = xi / r;
    Mat H = Mat::Identity(dim(), dim()) - u * u.transpose();
    return H / r;
}
Mat HalfWavePhase::mixed_hess_closed(const Vec&, const Vec&) const { return Mat::Identity(dim(), dim()); }

// --- linear -----------------------------------------------------------------

LinearPhase::LinearPhase(int n, Vec shift) : PhaseFunction(n), shift_(std::move(shift)) {
    if (shift_.size() != n) throw PreconditionError("linear phase: shift has wrong dimension");
}
std::map<std::string, double> LinearPhase::parameters() const {
    std::map<std::string, double> p;
    for (int i = 0; i < dim(); ++i) p["x0_" + std::to_string(i + 1)] = shift_(i);
    return p;
}
double LinearPhase::eval(const Vec& x, const Vec& xi) const { return (x + shift_).dot(xi); }
Vec LinearPhase::grad_x_closed(const Vec&, const Vec& xi) const { return xi; }
Vec LinearPhase::grad_xi_closed(const Vec& x, const Vec&) const { return x + shift_; }
Mat LinearPhase::hess_xi_closed(const Vec&, const Vec&) const { return Mat::Zero(dim(), dim()); }
Mat LinearPhase::mixed_hess_closed(const Vec&, const Vec&) const { return Mat::Identity(dim(), dim()); }

// --- cusp -------------------------------------------------------------------

double CuspPhase::symbol_phase(const Vec& xi) const {
    const double a = xi(0), l = xi(dim() - 1);
    return amp_ * a * a * a / (l * l);
}
double CuspPhase::eval(const Vec& x, const Vec& xi) const { return x.dot(xi) + symbol_phase(xi); }
Vec CuspPhase::grad_x_closed(const Vec&, const Vec& xi) const { return xi; }
Vec CuspPhase::grad_xi_closed(const Vec& x, const Vec& xi) const {
    const int n = dim();
    const double a = xi(0), l = xi(n - 1);
    Vec g = x;
    g(0) += 3 * amp_ * a * a / (l * l);
    g(n - 1) += -2 * amp_ * a * a * a / (l * l * l);
    return g;
}
Mat CuspPhase::hess_xi_closed(const Vec&, const Vec& xi) const {
    const int n = dim();
    const double a = xi(0), l = xi(n - 1);
    Mat H = Mat::Zero(n, n);
    H(0, 0) = 6 * amp_ * a / (l * l);
    H(0, n - 1) = H(n - 1, 0) = -6 * amp_ * a * a / (l * l * l);
    H(n - 1, n - 1) = 6 * amp_ * a * a * a / (l * l * l * l);
    return H;
}
Mat CuspPhase::mixed_hess_closed(const Vec&, const Vec&) const { return Mat::Identity(dim(), dim()); }

// --- variable coefficient ---------------------------------------------------

VarCoefPhase::VarCoefPhase(int n, Vec b, double gamma) : PhaseFunction(n), b_(std::move(b)), gamma_(gamma) {
    if (b_.size() != n) throw PreconditionError("varcoef phase: b has wrong dimension");
}
std::map<std::string, double> VarCoefPhase::parameters() const {
    std::map<std::string, double> p{{"gamma", gamma_}};
    for (int i = 0; i < dim(); ++i) p["b_" + std::to_string(i + 1)] = b_(i);
    return p;
}
double VarCoefPhase::speed(const Vec& x) const { return 1.0 + b_.dot(x) + 0.5 * gamma_ * x.squaredNorm(); }
Vec VarCoefPhase::speed_gradient(const Vec& x) const { return b_ + gamma_ * x; }
double VarCoefPhase::eval(const Vec& x, const Vec& xi) const { return x.dot(xi) + speed(x) * xi.norm(); }
Vec VarCoefPhase::grad_x_closed(const Vec& x, const Vec& xi) const { return xi + speed_gradient(x) * xi.norm(); }
Vec VarCoefPhase::grad_xi_closed(const Vec& x, const Vec& xi) const { return x + speed(x) * xi / xi.norm(); }
Mat VarCoefPhase::hess_xi_closed(const Vec& x, const Vec& xi) const {
    const double r = xi.norm();
    const Vec u = xi / r;
    Mat H = Mat::Identity(dim(), dim()) - u * u.transpose();
    return speed(x) * H / r;
}
Mat VarCoefPhase::mixed_hess_closed(const Vec& x, const Vec& xi) const {
    const Vec u = xi / xi.norm();
    Mat M = Mat::Identity(dim(), dim());
    M += speed_gradient(x) * u.transpose();
    return M;
}

// --- saddle -----------------------------------------------------------------

SaddlePhase::SaddlePhase(double a1, double a2) : PhaseFunction(3), a1_(a1), a2_(a2) {}
double SaddlePhase::symbol_phase(const Vec& xi) const {
    return (a1_ * xi(0) * xi(0) + a2_ * xi(1) * xi(1)) / (2 * xi(2));
}
double SaddlePhase::eval(const Vec& x, const Vec& xi) const { return x.dot(xi) + symbol_phase(xi); }
Vec SaddlePhase::grad_x_closed(const Vec&, const Vec& xi) const { return xi; }
Vec SaddlePhase::grad_xi_closed(const Vec& x, const Vec& xi) const {
    const double l = xi(2);
    Vec g = x;
    g(0) += a1_ * xi(0) / l;
    g(1) += a2_ * xi(1) / l;
    g(2) -= (a1_ * xi(0) * xi(0) + a2_ * xi(1) * xi(1)) / (2 * l * l);
    return g;
}
Mat SaddlePhase::hess_xi_closed(const Vec&, const Vec& xi) const {
    const double l = xi(2);
    Mat H = Mat::Zero(3, 3);
    H(0, 0) = a1_ / l;
    H(1, 1) = a2_ / l;
    H(0, 2) = H(2, 0) = -a1_ * xi(0) / (l * l);
    H(1, 2) = H(2, 1) = -a2_ * xi(1) / (l * l);
    H(2, 2) = (a1_ * xi(0) * xi(0) + a2_ * xi(1) * xi(1)) / (l * l * l);
    return H;
}
Mat SaddlePhase::mixed_hess_closed(const Vec&, const Vec&) const { return Mat::Identity(3, 3); }

// --- registry ---------------------------------------------------------------

std::vector<std::string> phase_names() { return {"halfwave", "linear", "cusp", "varcoef", "saddle"}; }

namespace {

double take(std::map<std::string, double>& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    if (it == p.end()) return fallback;
    double v = it->second;
    p.erase(it);
    return v;
}

}  // namespace

PhasePtr make_phase(const std::string& name, int n, const std::map<std::string, double>& params,
                    DerivativeMode mode) {
    if (n < 2 || n > 3) throw UsageError("phase: n must be 2 or 3");
    auto p = params;
    std::shared_ptr<PhaseFunction> out;
    if (name == "halfwave") {
        out = std::make_shared<HalfWavePhase>(n);
    } else if (name == "linear") {
        Vec s(n);
        const double defaults[3] = {0.2, 0.1, 0.0};
        for (int i = 0; i < n; ++i) s(i) = take(p, "x0_" + std::to_string(i + 1), defaults[i]);
        out = std::make_shared<LinearPhase>(n, s);
    } else if (name == "cusp") {
        out = std::make_shared<CuspPhase>(n, take(p, "amp", 1.0));
    } else if (name == "varcoef") {
        Vec b(n);
        const double defaults[3] = {0.1, 0.05, 0.0};
        for (int i = 0; i < n; ++i) b(i) = take(p, "b_" + std::to_string(i + 1), defaults[i]);
        out = std::make_shared<VarCoefPhase>(n, b, take(p, "gamma", 0.0));
    } else if (name == "saddle") {
        if (n != 3) throw UsageError("phase saddle needs n = 3");
        const double a1 = take(p, "a1", 1.0);
        out = std::make_shared<SaddlePhase>(a1, take(p, "a2", -1.0));
    } else {
        std::string valid;
        for (auto& s : phase_names()) valid += " " + s;
        throw UsageError("unknown phase '" + name + "'; valid:" + valid);
    }
    if (!p.empty()) throw UsageError("phase " + name + ": unknown parameter '" + p.begin()->first + "'");
    out->set_derivative_mode(mode);
    return out;
}

// --- geometry ---------------------------------------------------------------

double eval_phase(const PhaseFunction& phase, const Vec& x, const FrequencyPoint& xi, const ConeSpec& cone) {
    if (xi.dim() != phase.dim() || x.size() != phase.dim()) throw PreconditionError("eval_phase: dimension mismatch");
    if (!cone.contains_direction(xi.cartesian())) throw DomainError("eval_phase: frequency outside the cone");
    return phase.eval(x, xi.cartesian());
}

double curvature_J(const PhaseFunction& phase, const Vec& x, const Vec& omega) {
    Mat H = phase.hess_omega(x, omega);
    if (!H.allFinite()) throw DomainError("curvature_J: non-finite Hessian");
    return H.determinant();
}

CurvatureData build_Q_from_hessian(const Mat& H, int k, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("build_Q: eps must lie in (0,1)");
    const double scale = 1.0 + H.cwiseAbs().maxCoeff();
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw InternalError("build_Q: Hessian is not symmetric");
    CurvatureData c;
    c.k = k;
    c.eps = eps;
    c.hessian = H;
    c.J = H.determinant();
    c.regularizer = std::exp2(-eps * k);
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    c.hess_eigenvalues = es.eigenvalues();
    c.eigenvectors = es.eigenvectors();
    const int d = static_cast<int>(H.rows());
    c.q_eigenvalues.resize(d);
    Vec qs(d), qis(d);
    const double thr = std::exp2(-eps * k / 2);
    c.mu = 0;
    c.mu_sign = 0;
    for (int i = 0; i < d; ++i) {
        const double l = c.hess_eigenvalues(i);
        c.q_eigenvalues(i) = std::sqrt(c.regularizer + l * l);
        qs(i) = std::sqrt(c.q_eigenvalues(i));
        qis(i) = 1.0 / qs(i);
        if (std::abs(l) > thr) c.mu += l > 0 ? 1 : -1;
        else c.mu_indeterminate = true;
        if (l != 0.0) c.mu_sign += l > 0 ? 1 : -1;
    }
    const Mat& V = c.eigenvectors;
    c.Q = V * c.q_eigenvalues.asDiagonal() * V.transpose();
    c.Q_sqrt = V * qs.asDiagonal() * V.transpose();
    c.Q_inv_sqrt = V * qis.asDiagonal() * V.transpose();
    c.det_Q = c.q_eigenvalues.prod();
    return c;
}

CurvatureData build_Q(const PhaseFunction& phase, const Vec& x, const Vec& omega, int k, double eps) {
    CurvatureData c = build_Q_from_hessian(phase.hess_omega(x, omega), k, eps);
    c.x = x;
    c.omega = omega;
    return c;
}

FrequencyPoint invert_grad_x(const PhaseFunction& phase, const Vec& x, const Vec& zeta, const ConeSpec& cone,
                             const InversionOptions& opts) {
    const double target = opts.tolerance * zeta.norm();
    auto residual = [&](const Vec& xi) -> std::pair<Vec, double> {
        Vec F = phase.grad_x(x, xi) - zeta;
        double r = F.norm();
        if (!std::isfinite(r)) r = std::numeric_limits<double>::infinity();
        return {F, r};
    };
    Vec xi = zeta;
    auto [F, r] = residual(xi);
    bool converged = r <= target;
    for (int it = 0; it < opts.max_iterations && !converged; ++it) {
        const Mat M = phase.mixed_hess(x, xi);
        const Vec step = M.partialPivLu().solve(F);
        double t = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half, t *= 0.5) {
            Vec cand = xi - t * step;
            auto [Fc, rc] = residual(cand);
            if (rc < r) {
                xi = cand;
                F = Fc;
                r = rc;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        converged = r <= target;
    }
    if (!converged) throw InversionFailure("invert_grad_x: Newton iteration did not converge", r);
    if (!cone.contains_direction(xi)) throw DomainError("invert_grad_x: converged point lies outside the cone");
    return FrequencyPoint(xi);
}

ConeSample sample_cone(const std::vector<double>& u, int n, double omega_max, double lambda_lo, double lambda_hi,
                       double x_half_width) {
    ConeSample s;
    s.x.resize(n);
    for (int i = 0; i < n; ++i) s.x(i) = x_half_width * (2 * u[i] - 1);
    s.omega.resize(n - 1);
    if (n == 2) {
        s.omega(0) = omega_max * (2 * u[n] - 1);
    } else {
        const double r = omega_max * std::sqrt(u[n]);
        const double a = kTwoPi * u[n + 1];
        s.omega(0) = r * std::cos(a);
        s.omega(1) = r * std::sin(a);
    }
    const double t = u[2 * n - 1];
    s.lambda = lambda_lo * std::pow(lambda_hi / lambda_lo, t);
    return s;
}

PhaseReport validate_phase(const PhaseFunction& phase, const ConeSpec& cone, int samples, std::uint64_t seed, int k,
                           double eps) {
    cone.validate();
    if (samples < 100) throw PreconditionError("validate_phase: need at least 100 samples");
    const int n = phase.dim();
    PhaseReport rep;
    rep.phase = phase.name();
    rep.samples = samples;
    rep.min_mixed_det = rep.min_grad_ratio = std::numeric_limits<double>::infinity();
    Halton seq(2 * n + 1, seed);

    // finite-difference twin of the same phase
    PhasePtr fd = make_phase(phase.name(), n, phase.parameters(), DerivativeMode::finite_difference);
    auto rel = [](double a, double b, double scale) { return std::abs(a - b) / std::max(std::abs(b), scale); };
    auto relm = [](const Mat& a, const Mat& b, double scale) {
        return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), scale);
    };

    for (int s = 0; s < samples; ++s) {
        auto u = seq.next();
        ConeSample c = sample_cone(u, n, cone.omega_max, cone.lambda_min, 4096.0);
        const Vec xi = c.xi();
        const double phi = phase.eval(c.x, xi);
        const double pscale = std::abs(phi) + 1e-300;

        const double det = phase.mixed_hess(c.x, xi).determinant();
        rep.min_mixed_det = std::min(rep.min_mixed_det, std::abs(det));
        rep.max_mixed_det = std::max(rep.max_mixed_det, std::abs(det));
        const double gr = phase.grad_x(c.x, xi).norm() / xi.norm();
        rep.min_grad_ratio = std::min(rep.min_grad_ratio, gr);
        rep.max_grad_ratio = std::max(rep.max_grad_ratio, gr);

        for (double t : {0.5, 2.0, 7.0}) {
            const double r = std::abs(phase.eval(c.x, t * xi) - t * phi) / (t * pscale);
            rep.max_homogeneity_residual = std::max(rep.max_homogeneity_residual, r);
        }
        rep.max_euler_residual = std::max(rep.max_euler_residual,
                                          std::abs(xi.dot(phase.grad_xi(c.x, xi)) - phi) / pscale);

        // derivative modes, evaluated at unit scale
        const Vec xu = lift(c.omega);
        const double hs = (std::abs(phase.eval(c.x, xu)) + 1.0);
        double fdres = 0.0;
        fdres = std::max(fdres, relm(fd->grad_x(c.x, xu), phase.grad_x(c.x, xu), 1.0));
        fdres = std::max(fdres, relm(fd->grad_xi(c.x, xu), phase.grad_xi(c.x, xu), 1.0));
        fdres = std::max(fdres, relm(fd->hess_xi(c.x, xu), phase.hess_xi(c.x, xu), hs));
        fdres = std::max(fdres, relm(fd->mixed_hess(c.x, xu), phase.mixed_hess(c.x, xu), 1.0));
        fdres = std::max(fdres, rel(curvature_J(*fd, c.x, c.omega), curvature_J(phase, c.x, c.omega), 1.0));
        rep.max_fd_residual = std::max(rep.max_fd_residual, fdres);

        // Q domination on a random direction
        CurvatureData q = build_Q(phase, c.x, c.omega, k, eps);
        Vec z(n - 1);
        for (int i = 0; i < n - 1; ++i) z(i) = 2 * u[(i + 2) % (2 * n + 1)] - 1;
        const double qz = z.dot(q.Q * z);
        const double hz = std::abs(z.dot(q.hessian * z));
        const double viol = std::max({0.0, hz - qz, q.regularizer * z.squaredNorm() - qz});
        rep.max_q_domination_violation = std::max(rep.max_q_domination_violation, viol);

        try {
            FrequencyPoint back = invert_grad_x(phase, c.x, phase.grad_x(c.x, xi), ConeSpec{4.0, 0.5});
            rep.max_inversion_residual =
                std::max(rep.max_inversion_residual, (back.cartesian() - xi).norm() / xi.norm());
        } catch (const Error&) {
            rep.max_inversion_residual = std::numeric_limits<double>::infinity();
        }
    }
    return rep;
}

}  // namespace fiolab
