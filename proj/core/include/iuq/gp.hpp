#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iuq::gp {

enum class KernelFamily { power_exponential, rbf, matern };

/// Stationary covariance function on the scaled distance
/// rho = sqrt(sum_i ((x_i - x'_i) / l_i)^2):
///   power_exponential: sigma^2 * exp(-rho^r / 2)
///   rbf:               sigma^2 * exp(-rho^2 / 2)
///   matern nu=3/2:     sigma^2 * (1 + sqrt(3) rho) exp(-sqrt(3) rho)
///   matern nu=5/2:     sigma^2 * (1 + sqrt(5) rho + 5 rho^2/3) exp(-sqrt(5) rho)
/// `lengthscales` has one entry (isotropic) or one per input dimension.
struct Kernel {
  KernelFamily family = KernelFamily::rbf;
  double amplitude = 1.0;  // sigma, > 0
  Eigen::VectorXd lengthscales = Eigen::VectorXd::Ones(1);
  double exponent = 2.0;   // r in (0, 2], power_exponential only
  double nu = 1.5;         // 1.5 or 2.5, matern only
};

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& a,
                            const Eigen::MatrixXd& b);

struct GpFitConfig {
  KernelFamily family = KernelFamily::rbf;
  double exponent = 2.0;
  double nu = 1.5;
  bool ard = false;             // one lengthscale per input dimension
  int restarts = 10;
  int max_evaluations = 200;    // per restart
  std::uint64_t seed = 0;
};

/// Zero-mean GP regressor with cached Cholesky factor and weight vector.
struct GpModel {
  Kernel kernel;
  Eigen::MatrixXd training_inputs;   // N x d
  Eigen::VectorXd training_targets;  // N
  double jitter = 0.0;               // diagonal addition that made K factorizable
  double log_marginal_likelihood = 0.0;
  Eigen::MatrixXd chol;              // lower factor of K + jitter*I
  Eigen::VectorXd weights;           // (K + jitter*I)^{-1} y
  std::vector<std::string> warnings;

  std::string to_json_string() const;
  static GpModel from_json_string(const std::string& text);
  void save_json(const std::filesystem::path& path) const;
  static GpModel load_json(const std::filesystem::path& path);
};

/// Log marginal likelihood of the targets at fixed hyperparameters, using the
/// smallest jitter in the ladder 1e-10..1e-6 that makes the Gram factorizable.
/// Returns -inf if none does.
double log_marginal_likelihood(const Kernel& kernel, const Eigen::MatrixXd& inputs,
                               const Eigen::VectorXd& targets, double* jitter_used = nullptr);

/// Maximize the log marginal likelihood over amplitude and lengthscales
/// (log-space, multi-start local search); best restart kept. Exact duplicate
/// input rows are collapsed to their mean target with a warning.
GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
            const GpFitConfig& config);

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GpPrediction predict(const GpModel& model, const Eigen::MatrixXd& test_inputs);

/// Mean-only fast path (used by surrogate evaluation loops).
Eigen::VectorXd predict_mean(const GpModel& model, const Eigen::MatrixXd& test_inputs);

}  // namespace iuq::gp
