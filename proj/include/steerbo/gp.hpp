#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "steerbo/search_space.hpp"

namespace steerbo {

// Matern 5/2 kernel with per-dimension (ARD) lengthscales.
struct KernelParams {
    std::vector<double> lengthscales; // l_i > 0, one per input dimension
    double signal_variance = 1.0;     // sigma_f^2 > 0
    double noise_variance = 1e-6;     // sigma_n^2 >= 0
};

struct Posterior {
    double mean = 0.0;
    double std = 0.0;
};

// Gaussian-process regression surrogate on the unit hypercube. Targets are
// standardized internally; predictions are reported on the original scale.
// Immutable after construction; predict may be called concurrently.
class GPModel {
public:
    // Maximum-marginal-likelihood fit: multi-start (10) gradient ascent
    // with analytic gradients in log-parameter space. Deterministic given
    // seed. X rows are points in [0,1]^d, y the raw objective values.
    static GPModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, uint64_t seed);

    // Fixed hyperparameters, no optimization. Closed-form oracles and the
    // interpolation tests build models through this.
    static GPModel from_kernel(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const KernelParams& kernel, bool standardize = true);

    // Full refit on the augmented dataset (exactly fit() on the
    // concatenation, same seed semantics).
    GPModel update(const UnitPoint& u, double value, uint64_t seed) const;

    Posterior predict(const UnitPoint& u) const;

    // Batched prediction for candidate scoring; U is m x d.
    void predict_batch(const Eigen::MatrixXd& U, Eigen::VectorXd& mean,
                       Eigen::VectorXd& stddev) const;

    size_t size() const { return static_cast<size_t>(X_.rows()); }
    size_t dim() const { return static_cast<size_t>(X_.cols()); }
    const KernelParams& kernel() const { return kernel_; }
    double jitter() const { return jitter_; }
    double y_mean() const { return y_mean_; }
    double y_std() const { return y_std_; }
    const Eigen::MatrixXd& X() const { return X_; }
    const Eigen::VectorXd& y_raw() const { return y_raw_; }
    const Eigen::MatrixXd& chol_lower() const { return L_; }

private:
    GPModel() = default;

    Eigen::MatrixXd X_;
    Eigen::VectorXd y_raw_; // original targets (kept for update())
    Eigen::VectorXd y_std_vec_; // standardized targets
    double y_mean_ = 0.0;
    double y_std_ = 1.0;
    KernelParams kernel_;
    Eigen::MatrixXd L_;     // lower Cholesky factor of K_f + (sn2+jitter) I
    Eigen::VectorXd alpha_; // (K_f + (sn2+jitter) I)^{-1} y_standardized
    double jitter_ = 0.0;
};

// Noiseless kernel matrix K_f (signal variance included, no noise term).
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& kernel);

// Cross-kernel k(X, U): n x m.
Eigen::MatrixXd kernel_cross(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U,
                             const KernelParams& kernel);

// Log marginal likelihood of the given targets under K_f + sn2 I (the
// fitting pipeline passes standardized targets). Throws NumericError when
// the covariance is not positive definite.
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const KernelParams& kernel);

// Same value plus the analytic gradient with respect to the log
// parameters, ordered [log l_1 .. log l_d, log sf2, log sn2].
double log_marginal_likelihood_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const KernelParams& kernel, Eigen::VectorXd& grad);

} // namespace steerbo
