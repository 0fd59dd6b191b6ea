#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iuq/core.hpp"
#include "iuq/covest.hpp"
#include "iuq/sampler.hpp"
#include "iuq/surrogate.hpp"

namespace iuq::calib {

struct PriorLaw {
  enum class Kind { uniform, normal };
  Kind kind = Kind::uniform;
  double a = 0.0;  // low or mean
  double b = 1.0;  // high or sd

  static PriorLaw uniform(double low, double high) { return {Kind::uniform, low, high}; }
  static PriorLaw normal(double mean, double sd) { return {Kind::normal, mean, sd}; }

  double logpdf(double x) const;
};

/// Per-parameter laws, plus the hyperprior laws used in hierarchical mode:
/// hyper-mean ~ uniform(0,5), hyper-sd ~ uniform(0,1) by default, with the
/// per-group parameter normally distributed around them.
struct PriorSpec {
  std::vector<std::string> names;
  std::vector<PriorLaw> laws;
  std::vector<PriorLaw> hyper_mean_laws;
  std::vector<PriorLaw> hyper_sd_laws;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(names.size()); }
  static PriorSpec uniform_box(const std::vector<std::string>& names, double low, double high);
  void validate() const;

  std::string to_json_string() const;
  static PriorSpec from_json_string(const std::string& text);
};

struct HierarchicalParams {
  Eigen::VectorXd hyper_mean;  // d
  Eigen::VectorXd hyper_sd;    // d, positive
  Eigen::MatrixXd per_group;   // G x d
};

struct TargetOptions {
  covest::CovMode cov_mode = covest::CovMode::full;
  double fallback_sigma = 0.01;      // iid observation sd when no covariance model fitted
  bool include_emulator_cov = false; // add the gp_pca predictive covariance per evaluation
};

/// logp(theta) = mvn_logpdf(y_obs; surrogate(theta), Sigma) + log prior, over
/// unconstrained coordinates with Jacobian corrections. Gradient available
/// for the mlp backend without emulator covariance.
sampler::TargetDensity build_single_level_target(const surrogate::Surrogate& model,
                                                 const TransientCase& observed,
                                                 const TargetOptions& options,
                                                 const PriorSpec& priors);

/// Shared theta across several cases: the likelihood sums per-case terms.
sampler::TargetDensity build_pooled_target(const std::vector<const surrogate::Surrogate*>& models,
                                           const std::vector<const TransientCase*>& cases,
                                           const TargetOptions& options, const PriorSpec& priors);

/// Joint density over d hyper-means, d hyper-sds, and G*d per-group
/// parameters, sampled non-centered (theta_gj = mu_j + sigma_j * eta_gj).
/// Constrained draws report actual theta values. Parameter layout:
/// [mu_<p>..., sigma_<p>..., theta_<case>_<p>...].
sampler::TargetDensity build_hierarchical_target(
    const std::vector<const surrogate::Surrogate*>& models,
    const std::vector<const TransientCase*>& cases, const TargetOptions& options,
    const PriorSpec& priors);

/// Centered-parameterization density in constrained space (no transform
/// Jacobians): likelihood + sum log N(theta; mu, sigma) + hyperprior terms.
/// Exposed so the two parameterizations can be checked against each other.
double hierarchical_logp_centered(const std::vector<const surrogate::Surrogate*>& models,
                                  const std::vector<const TransientCase*>& cases,
                                  const TargetOptions& options, const PriorSpec& priors,
                                  const HierarchicalParams& params);

struct HyperParameterSummary {
  std::string name;
  double mu_mean = 0.0, mu_q025 = 0.0, mu_q975 = 0.0;
  double sigma_mean = 0.0, sigma_q025 = 0.0, sigma_q975 = 0.0;
};

struct HyperSummary {
  std::vector<HyperParameterSummary> parameters;
  Eigen::VectorXd predictive_mean;  // mean of mu_j draws
  Eigen::VectorXd predictive_sd;    // mean of sigma_j draws
  double max_rhat = 0.0;
};

/// Posterior-mean hyper-parameters and the resulting predictive normal per
/// parameter. Enforces split R-hat < 1.05 on the hyper columns unless
/// `override_diagnostics`.
HyperSummary summarize_hyper(const std::vector<sampler::PosteriorChain>& chains,
                             const std::vector<std::string>& parameter_names,
                             bool override_diagnostics = false);

struct ResampleConfig {
  int max_rounds = 3;
  double mass_threshold = 0.02;  // fraction of draws within 5% of a bound
  int design_size = 300;
  surrogate::MlpConfig mlp;
  int chains = 2;
  int warmup = 600;
  int draws = 600;
  std::uint64_t seed = 0;
  TargetOptions target;
};

struct ResampleRound {
  std::vector<std::pair<double, double>> bounds;
  Eigen::VectorXd upper_mass;  // per-dimension fraction of draws near the high bound
  Eigen::VectorXd lower_mass;
};

struct ResampleResult {
  std::vector<sampler::PosteriorChain> chains;  // final round
  std::vector<std::pair<double, double>> bounds;
  std::vector<ResampleRound> history;
  bool bounds_still_active = false;  // warning: mass at a bound after max_rounds
};

/// Rounds of [train surrogate on current bounds -> sample -> extend any bound
/// holding more than mass_threshold of draws within 5% of it by 50% of the
/// range], up to max_rounds extensions.
ResampleResult iterative_resample(const surrogate::SimulatorFn& simulate,
                                  const TransientCase& observed, const PriorSpec& priors,
                                  const ResampleConfig& config);

struct ThetaSource {
  enum class Kind { point, predictive_normal, chains };
  Kind kind = Kind::point;
  Eigen::VectorXd point;
  Eigen::VectorXd predictive_mean, predictive_sd;
  Eigen::MatrixXd draws;  // pooled chain draws, theta columns only

  static ThetaSource from_point(Eigen::VectorXd theta);
  static ThetaSource from_predictive(Eigen::VectorXd mean, Eigen::VectorXd sd);
  static ThetaSource from_draws(Eigen::MatrixXd draws);
};

struct ValidationCase {
  const TransientCase* observed = nullptr;
  surrogate::SimulatorFn predict;  // theta -> flattened prediction
  bool is_test = false;
};

struct ErrorStats {
  std::string case_id;
  std::string split;   // "train" | "test"
  std::string source;  // "posterior" | "prior"
  int samples = 0;
  double mean = 0.0, sd = 0.0, mae = 0.0, rmse = 0.0;
  double q025 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q975 = 0.0;
};

struct PosteriorValidationReport {
  std::vector<ErrorStats> rows;

  const ErrorStats* find(const std::string& case_id, const std::string& source) const;
  double pooled_mae(const std::string& split, const std::string& source) const;
  void save_csv(const std::filesystem::path& path) const;
};

/// Error distributions (observation - prediction) per case and split, with the
/// calibrated source compared against the prior reference point (theta = 1
/// unless overridden). Distributional sources are propagated by drawing
/// `theta_draws` parameter samples.
PosteriorValidationReport validate_posterior(const ThetaSource& source,
                                             const std::vector<ValidationCase>& cases,
                                             int theta_draws, std::uint64_t seed,
                                             std::optional<Eigen::VectorXd> reference_theta = {});

}  // namespace iuq::calib
