#include "steerbo/gp.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "steerbo/errors.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

namespace {

constexpr double kNoiseFloor = 1e-8; // learned noise variance lower bound
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Matern 5/2 profile in s = sqrt(5) * r, where r is the ARD-scaled
// distance: k = sf2 * (1 + s + s^2/3) * exp(-s).
double matern52(double s, double sf2) {
    return sf2 * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double scaled_s(const Eigen::MatrixXd& X, Eigen::Index p, Eigen::Index q,
                const KernelParams& k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        double d = (X(p, i) - X(q, i)) / k.lengthscales[static_cast<size_t>(i)];
        acc += d * d;
    }
    return std::sqrt(5.0 * acc);
}

void check_kernel(const Eigen::MatrixXd& X, const KernelParams& k) {
    if (k.lengthscales.size() != static_cast<size_t>(X.cols()))
        throw ConfigError("kernel has " + std::to_string(k.lengthscales.size()) +
                          " lengthscales for " + std::to_string(X.cols()) + " dims");
    for (double l : k.lengthscales) {
        if (!(l > 0.0)) throw NumericError("lengthscales must be positive");
    }
    if (!(k.signal_variance > 0.0)) throw NumericError("signal variance must be positive");
    if (k.noise_variance < 0.0) throw NumericError("noise variance must be non-negative");
}

// Cholesky of K_f + (sn2 + jitter) I with jitter escalation: first try the
// exact matrix, then 1e-10 stepping x10 up to 1e-4 (duplicate rows from
// the discrete bin-center embedding make escalation necessary).
std::optional<std::pair<Eigen::LLT<Eigen::MatrixXd>, double>> chol_with_jitter(
    const Eigen::MatrixXd& Kf, double sn2) {
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd A = Kf;
        A.diagonal().array() += sn2 + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) return std::make_pair(std::move(llt), jitter);
        jitter = (jitter == 0.0) ? 1e-10 : jitter * 10.0;
    }
    return std::nullopt;
}

// LML and analytic log-space gradient; nullopt when K + sn2 I is not
// positive definite (no jitter here: the optimizer treats that as -inf).
std::optional<double> lml_grad_impl(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const KernelParams& k, Eigen::VectorXd* grad) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const double sf2 = k.signal_variance;
    const double sn2 = k.noise_variance;

    // S holds the scaled distances; Kf the noiseless kernel matrix.
    Eigen::MatrixXd S(n, n), Kf(n, n);
    for (Eigen::Index p = 0; p < n; ++p) {
        S(p, p) = 0.0;
        Kf(p, p) = sf2;
        for (Eigen::Index q = p + 1; q < n; ++q) {
            double s = scaled_s(X, p, q, k);
            S(p, q) = S(q, p) = s;
            double v = matern52(s, sf2);
            Kf(p, q) = Kf(q, p) = v;
        }
    }

    Eigen::MatrixXd A = Kf;
    A.diagonal().array() += sn2;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return std::nullopt;

    Eigen::VectorXd alpha = llt.solve(y);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
    double lml = -0.5 * y.dot(alpha) - logdet - 0.5 * static_cast<double>(n) * kLog2Pi;

    if (grad) {
        // dLML/dtheta = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta)
        Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
        Eigen::MatrixXd M = alpha * alpha.transpose() - Kinv;

        grad->resize(d + 2);
        // d k / d log l_i = sf2 * exp(-s) * (5/3)(1+s) * d_i^2 / l_i^2
        for (Eigen::Index i = 0; i < d; ++i) {
            double li = k.lengthscales[static_cast<size_t>(i)];
            double acc = 0.0;
            for (Eigen::Index p = 0; p < n; ++p) {
                for (Eigen::Index q = p + 1; q < n; ++q) {
                    double di = X(p, i) - X(q, i);
                    if (di == 0.0) continue;
                    double s = S(p, q);
                    double dk = sf2 * std::exp(-s) * (5.0 / 3.0) * (1.0 + s) *
                                (di * di) / (li * li);
                    acc += M(p, q) * dk; // symmetric: count (p,q) and (q,p)
                }
            }
            (*grad)(i) = acc; // 1/2 * 2 * acc (off-diagonal pairs twice)
        }
        // d K / d log sf2 = Kf ; d K / d log sn2 = sn2 I
        (*grad)(d) = 0.5 * (M.array() * Kf.array()).sum();
        (*grad)(d + 1) = 0.5 * sn2 * M.trace();
    }
    return lml;
}

KernelParams params_from_log(const Eigen::VectorXd& phi, Eigen::Index d) {
    KernelParams k;
    k.lengthscales.resize(static_cast<size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) k.lengthscales[static_cast<size_t>(i)] = std::exp(phi(i));
    k.signal_variance = std::exp(phi(d));
    k.noise_variance = std::exp(phi(d + 1));
    return k;
}

Eigen::VectorXd clamp_log_params(Eigen::VectorXd phi, Eigen::Index d) {
    // Inputs live on the unit cube (diameter sqrt(d)), so lengthscales far
    // beyond it only flatten the Gram matrix into near-singularity and let
    // the posterior extrapolate wildly; the box keeps the ascent inside
    // the numerically sane regime.
    const double llo = std::log(2e-2), lhi = std::log(3.0);
    const double flo = std::log(1e-6), fhi = std::log(1e6);
    const double nlo = std::log(kNoiseFloor), nhi = std::log(1e2);
    for (Eigen::Index i = 0; i < d; ++i) phi(i) = std::clamp(phi(i), llo, lhi);
    phi(d) = std::clamp(phi(d), flo, fhi);
    phi(d + 1) = std::clamp(phi(d + 1), nlo, nhi);
    return phi;
}

// Monotone gradient ascent with backtracking on the step size. The
// direction is the gradient normalized by its max component, so one
// accepted step never moves a log parameter by more than `step`.
std::pair<Eigen::VectorXd, double> ascend(const Eigen::MatrixXd& X,
                                          const Eigen::VectorXd& y,
                                          Eigen::VectorXd phi) {
    const Eigen::Index d = X.cols();
    phi = clamp_log_params(std::move(phi), d);
    Eigen::VectorXd grad;
    auto val = lml_grad_impl(X, y, params_from_log(phi, d), &grad);
    if (!val) return {phi, -std::numeric_limits<double>::infinity()};

    double step = 0.5;
    for (int iter = 0; iter < 80; ++iter) {
        double gmax = grad.cwiseAbs().maxCoeff();
        if (gmax < 1e-9) break;
        Eigen::VectorXd dir = grad / gmax;

        double t = step;
        bool accepted = false;
        Eigen::VectorXd phi_new;
        Eigen::VectorXd grad_new;
        double val_new = 0.0;
        for (int bt = 0; bt < 30; ++bt) {
            phi_new = clamp_log_params(phi + t * dir, d);
            auto v = lml_grad_impl(X, y, params_from_log(phi_new, d), &grad_new);
            if (v && *v > *val) {
                val_new = *v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        double gain = val_new - *val;
        phi = phi_new;
        grad = grad_new;
        val = val_new;
        step = std::min(t * 2.0, 1.0);
        if (gain < 1e-9 * (1.0 + std::abs(val_new))) break;
    }
    return {phi, *val};
}

} // namespace

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& kernel) {
    check_kernel(X, kernel);
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index p = 0; p < n; ++p) {
        K(p, p) = kernel.signal_variance;
        for (Eigen::Index q = p + 1; q < n; ++q) {
            double v = matern52(scaled_s(X, p, q, kernel), kernel.signal_variance);
            K(p, q) = K(q, p) = v;
        }
    }
    return K;
}

Eigen::MatrixXd kernel_cross(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U,
                             const KernelParams& kernel) {
    check_kernel(X, kernel);
    const Eigen::Index n = X.rows(), m = U.rows();
    Eigen::MatrixXd K(n, m);
    for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = 0; q < m; ++q) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < X.cols(); ++i) {
                double d = (X(p, i) - U(q, i)) / kernel.lengthscales[static_cast<size_t>(i)];
                acc += d * d;
            }
            K(p, q) = matern52(std::sqrt(5.0 * acc), kernel.signal_variance);
        }
    }
    return K;
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const KernelParams& kernel) {
    check_kernel(X, kernel);
    auto v = lml_grad_impl(X, y, kernel, nullptr);
    if (!v) throw NumericError("covariance not positive definite in log_marginal_likelihood");
    return *v;
}

double log_marginal_likelihood_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const KernelParams& kernel, Eigen::VectorXd& grad) {
    check_kernel(X, kernel);
    auto v = lml_grad_impl(X, y, kernel, &grad);
    if (!v) throw NumericError("covariance not positive definite in log_marginal_likelihood");
    return *v;
}

GPModel GPModel::from_kernel(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const KernelParams& kernel, bool standardize) {
    if (X.rows() < 1) throw ConfigError("GP needs at least one observation");
    if (X.rows() != y.size()) throw ConfigError("X and y row counts differ");
    if (!X.allFinite() || !y.allFinite()) throw NumericError("non-finite GP inputs");
    check_kernel(X, kernel);

    GPModel m;
    m.X_ = X;
    m.y_raw_ = y;
    m.kernel_ = kernel;
    if (standardize) {
        m.y_mean_ = y.mean();
        double var = (y.array() - m.y_mean_).square().mean();
        m.y_std_ = std::sqrt(var);
        if (m.y_std_ < 1e-12) m.y_std_ = 1.0;
    } else {
        m.y_mean_ = 0.0;
        m.y_std_ = 1.0;
    }
    m.y_std_vec_ = (y.array() - m.y_mean_) / m.y_std_;

    Eigen::MatrixXd Kf = kernel_matrix(X, kernel);
    auto chol = chol_with_jitter(Kf, kernel.noise_variance);
    if (!chol)
        throw NumericError("Cholesky failed after jitter escalation (ill-conditioned data)");
    m.L_ = chol->first.matrixL();
    m.jitter_ = chol->second;
    m.alpha_ = chol->first.solve(m.y_std_vec_);
    return m;
}

GPModel GPModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, uint64_t seed) {
    if (X.rows() < 1) throw ConfigError("GP needs at least one observation");
    if (X.rows() != y.size()) throw ConfigError("X and y row counts differ");
    if (!X.allFinite() || !y.allFinite()) throw NumericError("non-finite GP inputs");

    const Eigen::Index d = X.cols();
    double y_mean = y.mean();
    double y_sd = std::sqrt((y.array() - y_mean).square().mean());
    if (y_sd < 1e-12) y_sd = 1.0;
    Eigen::VectorXd ys = (y.array() - y_mean) / y_sd;

    // Multi-start ascent: one canonical start plus 9 seeded random ones.
    Rng rng(seed);
    Eigen::VectorXd best_phi;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int start = 0; start < 10; ++start) {
        Eigen::VectorXd phi(d + 2);
        if (start == 0) {
            for (Eigen::Index i = 0; i < d; ++i) phi(i) = std::log(0.5);
            phi(d) = 0.0;                 // sf2 = 1
            phi(d + 1) = std::log(1e-4);  // sn2
        } else {
            for (Eigen::Index i = 0; i < d; ++i)
                phi(i) = rng.uniform(std::log(0.1), std::log(2.0));
            phi(d) = rng.uniform(std::log(0.2), std::log(5.0));
            phi(d + 1) = rng.uniform(std::log(1e-7), std::log(1e-2));
        }
        auto [phi_end, val] = ascend(X, ys, phi);
        if (val > best_val) {
            best_val = val;
            best_phi = phi_end;
        }
    }
    if (!std::isfinite(best_val))
        throw NumericError("log marginal likelihood optimization failed on every start");

    return from_kernel(X, y, params_from_log(best_phi, d), /*standardize=*/true);
}

GPModel GPModel::update(const UnitPoint& u, double value, uint64_t seed) const {
    if (!std::isfinite(value)) throw NumericError("non-finite objective value in update");
    if (u.coords.size() != dim()) throw ConfigError("unit point dimension mismatch in update");
    Eigen::MatrixXd X2(X_.rows() + 1, X_.cols());
    X2.topRows(X_.rows()) = X_;
    for (Eigen::Index i = 0; i < X2.cols(); ++i)
        X2(X_.rows(), i) = u.coords[static_cast<size_t>(i)];
    Eigen::VectorXd y2(y_raw_.size() + 1);
    y2.head(y_raw_.size()) = y_raw_;
    y2(y_raw_.size()) = value;
    return fit(X2, y2, seed);
}

Posterior GPModel::predict(const UnitPoint& u) const {
    if (u.coords.size() != dim())
        throw ConfigError("unit point dimension " + std::to_string(u.coords.size()) +
                          " does not match model dimension " + std::to_string(dim()));
    Eigen::MatrixXd U(1, static_cast<Eigen::Index>(u.coords.size()));
    for (size_t i = 0; i < u.coords.size(); ++i) U(0, static_cast<Eigen::Index>(i)) = u.coords[i];
    Eigen::VectorXd mean, sd;
    predict_batch(U, mean, sd);
    return Posterior{mean(0), sd(0)};
}

void GPModel::predict_batch(const Eigen::MatrixXd& U, Eigen::VectorXd& mean,
                            Eigen::VectorXd& stddev) const {
    if (U.cols() != X_.cols()) throw ConfigError("prediction points have wrong dimension");
    const Eigen::Index m = U.rows();
    mean.resize(m);
    stddev.resize(m);
    Eigen::MatrixXd Ks = kernel_cross(X_, U, kernel_); // n x m
    // One column at a time, so a batch of many and a batch of one run the
    // same arithmetic in the same order and agree bit for bit.
    Eigen::VectorXd v(X_.rows());
    for (Eigen::Index q = 0; q < m; ++q) {
        mean(q) = y_mean_ + y_std_ * Ks.col(q).dot(alpha_);
        // sigma^2 = k(u,u) - ||L^{-1} k*||^2, clamped at zero before the root
        v = L_.triangularView<Eigen::Lower>().solve(Ks.col(q));
        double var = kernel_.signal_variance - v.squaredNorm();
        stddev(q) = y_std_ * std::sqrt(std::max(0.0, var));
    }
}

} // namespace steerbo
