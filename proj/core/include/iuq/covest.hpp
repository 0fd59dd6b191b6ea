#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iuq/rng.hpp"

namespace iuq::covest {

/// Flattened simulated series collected from repeated runs of one case.
struct Ensemble {
  Eigen::MatrixXd members;  // M x k
  std::string case_id;
};

enum class CovMode { full, diagonal };

/// Observation covariance with its stabilizing nugget and Cholesky factor.
///
/// The stored matrix is sigma = estimate + nugget * I; `cholesky` is the lower
/// factor of exactly that matrix. In diagonal mode off-diagonal entries are
/// dropped before factorization.
struct CovarianceModel {
  Eigen::MatrixXd matrix;    // k x k, symmetric, including nugget
  double nugget = 0.0;       // sigma_ind^2 added to the diagonal
  Eigen::MatrixXd cholesky;  // lower triangular
  CovMode mode = CovMode::full;
  bool eigenvalue_clipped = false;  // repair path was taken
  std::string case_id;

  Eigen::Index dim() const { return matrix.rows(); }

  /// Drop off-diagonal structure, keeping per-point variances and the nugget.
  CovarianceModel diagonalized() const;

  void save_json(const std::filesystem::path& csv_path) const;  // CSV + .json sidecar
  static CovarianceModel load_json(const std::filesystem::path& csv_path);
};

/// One simulator run at perturbed boundary conditions; nullopt = failed run.
using MemberSimulator = std::function<std::optional<Eigen::VectorXd>(Rng&)>;

/// Run the simulator M times with independently perturbed boundary conditions
/// and collect the flattened outputs. Failed members are dropped (recorded in
/// `warnings`); fewer than 2 survivors is an error.
Ensemble propagate_bc_uncertainty(const MemberSimulator& simulate_member, int members,
                                  std::uint64_t seed, const std::string& case_id,
                                  std::vector<std::string>* warnings = nullptr);

/// Unbiased sample covariance (divisor M-1) of the ensemble members.
Eigen::MatrixXd estimate_cov(const Ensemble& ensemble);

/// Per-location covariance blocks assembled block-diagonally. Member rows must
/// be location-major flattenings with `locations` blocks of length `steps`.
/// Cross-location covariance is discarded.
Eigen::MatrixXd estimate_blockdiag_cov(const Ensemble& ensemble, Eigen::Index locations,
                                       Eigen::Index steps);

/// sigma + nugget * I with a Cholesky factorization. If factorization fails,
/// eigenvalues are clipped at 1e-10 * trace/k and the factorization retried.
CovarianceModel regularize_cov(const Eigen::MatrixXd& sigma, double nugget,
                               CovMode mode = CovMode::full, const std::string& case_id = "");

/// Default nugget: (1% of the mean per-output sample standard deviation)^2.
double default_nugget(const Eigen::MatrixXd& sigma);

/// Multivariate normal log density via Cholesky solves; no explicit inverse.
double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const CovarianceModel& cov);

/// Solve sigma * z = r using the cached factor.
Eigen::VectorXd cov_solve(const CovarianceModel& cov, const Eigen::VectorXd& r);

double cov_log_det(const CovarianceModel& cov);

}  // namespace iuq::covest
