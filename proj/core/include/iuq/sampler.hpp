#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace iuq::sampler {

/// Per-coordinate map between the sampler's unconstrained space and the
/// model's constrained space.
struct VarTransform {
  enum class Kind { identity, log_odds };
  Kind kind = Kind::identity;
  double low = 0.0;
  double high = 1.0;

  static VarTransform identity() { return {}; }
  static VarTransform log_odds(double low, double high);

  double to_constrained(double z) const;
  double to_unconstrained(double x) const;
  double log_jacobian(double z) const;    // log |d constrained / d z|
  double d_log_jacobian(double z) const;  // derivative of the above in z
};

/// Log density over unconstrained coordinates, Jacobian corrections included.
/// grad_logp may be empty; gradient-based samplers require it.
struct TargetDensity {
  Eigen::Index dim = 0;
  std::vector<std::string> names;
  std::vector<VarTransform> transforms;
  std::function<double(const Eigen::VectorXd&)> logp;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_logp;
  /// Joint output maps for targets whose reported coordinates are not a
  /// per-coordinate function of z (non-centered hierarchies). When set they
  /// replace the per-coordinate transform application.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constrain_override;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> unconstrain_override;

  bool has_gradient() const { return static_cast<bool>(grad_logp); }
  Eigen::VectorXd to_constrained(const Eigen::VectorXd& z) const;
  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& x) const;
};

/// Post-warmup draws of one chain, reported in constrained space.
struct PosteriorChain {
  Eigen::MatrixXd draws;  // S x dim
  std::vector<std::string> names;
  int warmup = 0;
  std::uint64_t seed = 0;
  int chain_index = 0;
  int divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd mass_diagonal;
  double mean_accept = 0.0;
};

struct NutsConfig {
  int max_tree_depth = 10;
  double target_accept = 0.8;
  double init_radius = 2.0;     // uniform init box in unconstrained space
  double divergence_threshold = 1000.0;  // energy error counted as divergence
};

/// Multinomial No-U-Turn sampler with dual-averaging step-size adaptation and
/// windowed diagonal mass-matrix adaptation. Chains run concurrently on
/// independent RNG streams derived from the seed; results are deterministic.
std::vector<PosteriorChain> nuts_sample(const TargetDensity& target, int chains, int warmup,
                                        int draws, std::uint64_t seed,
                                        const NutsConfig& config = {});

struct RwmConfig {
  double target_accept = 0.234;
  double init_scale = 0.1;
  double init_radius = 2.0;
};

/// Gradient-free fallback: adaptive random-walk Metropolis with the same
/// chain output format as NUTS.
std::vector<PosteriorChain> rwm_sample(const TargetDensity& target, int chains, int warmup,
                                       int draws, std::uint64_t seed,
                                       const RwmConfig& config = {});

/// Split R-hat per dimension. Degenerate (zero-variance) dimensions are NaN.
Eigen::VectorXd rhat(const std::vector<PosteriorChain>& chains);

/// Effective sample size per dimension via the initial positive sequence of
/// combined-chain autocorrelations. Degenerate dimensions are NaN.
Eigen::VectorXd ess(const std::vector<PosteriorChain>& chains);

/// Pool post-warmup draws of all chains into one matrix.
Eigen::MatrixXd pooled_draws(const std::vector<PosteriorChain>& chains);

/// Monte Carlo standard error of the mean: sd / sqrt(ESS).
Eigen::VectorXd mcse_mean(const std::vector<PosteriorChain>& chains);

/// chain_<i>.csv per chain plus diagnostics.json (R-hat, ESS, divergences,
/// step sizes, seeds).
void save_chains(const std::filesystem::path& directory,
                 const std::vector<PosteriorChain>& chains);
std::vector<PosteriorChain> load_chains(const std::filesystem::path& directory);

}  // namespace iuq::sampler
