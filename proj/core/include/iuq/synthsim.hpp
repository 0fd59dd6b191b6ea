#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iuq/core.hpp"
#include "iuq/covest.hpp"

namespace iuq::synthsim {

enum class TransientKind { flow_reduction, power_increase, temperature_increase };

std::string kind_code(TransientKind kind);  // "FR", "PI", "TI"

/// One boundary-condition channel: constant level with a smooth ramp from
/// `start_level` to `end_level` over [ramp_start, ramp_end] seconds.
struct ChannelProfile {
  double start_level = 0.0;
  double end_level = 0.0;
  double ramp_start = 0.0;
  double ramp_end = 0.0;

  double at(double t) const;
};

/// Additive time-localized deviation unreachable by any parameter value.
/// Forms: "tail_bump" (late in the series) and "mid_bump" (inside the ramp).
struct Discrepancy {
  std::string form = "tail_bump";
  double magnitude = 0.0;
};

struct CaseSpec {
  std::string id;
  TransientKind kind = TransientKind::flow_reduction;
  int steps = 40;           // T >= 10
  double duration = 60.0;   // seconds; time grid is uniform on [0, duration]
  ChannelProfile pressure, flow, power, inlet_temperature;
  Eigen::Vector3d location_gains{0.7, 0.85, 1.0};  // lower, middle, upper
  std::optional<Discrepancy> discrepancy;

  Eigen::VectorXd time_grid() const;
  /// Ramp interval of the channel this transient actually moves.
  std::pair<double, double> transition_window() const;

  void save_json(const std::filesystem::path& path) const;
  static CaseSpec load_json(const std::filesystem::path& path);
};

void validate_spec(const CaseSpec& spec);

inline constexpr int kParameterCount = 4;

/// The four parameter multipliers and their qualitative effects:
///   gain   - scales the drive, raising or lowering the whole response
///   lag    - scales the first-order response time constant
///   offset - shifts the response level uniformly
///   slope  - sharpens or flattens the saturating response
const std::vector<std::string>& parameter_names();

/// Boundary-condition channels on the case time grid (4 channel rows).
TimeSeriesGrid boundary_grid(const CaseSpec& spec);

/// Deterministic forward model: void-fraction-like series in [0,1] at the
/// three locations. theta = (gain, lag, offset, slope) multipliers with
/// (1,1,1,1) the nominal curve. Smooth in theta and in the profile shapes.
TimeSeriesGrid simulate(const Eigen::VectorXd& theta, const CaseSpec& spec);

/// simulate + flatten, the shape used by surrogate training loops.
Eigen::VectorXd simulate_flat(const Eigen::VectorXd& theta, const CaseSpec& spec);

/// Upper bound on |output(t+1) - output(t)| for this spec and theta.
double smoothness_bound(const CaseSpec& spec, const Eigen::VectorXd& theta);

struct NoiseLaw {
  enum class Kind { iid, ar1 };
  Kind kind = Kind::iid;
  double sd = 0.0;
  double rho = 0.0;  // ar1 only

  static NoiseLaw iid(double sd) { return {Kind::iid, sd, 0.0}; }
  static NoiseLaw ar1(double rho, double sd) { return {Kind::ar1, sd, rho}; }
};

/// simulate + optional discrepancy bump + additive noise per the law.
/// AR(1) noise is stationary with marginal sd `sd` and lag-1 correlation rho,
/// independent across locations.
TransientCase synthesize_observations(const CaseSpec& spec, const Eigen::VectorXd& theta_star,
                                      const NoiseLaw& noise, std::uint64_t seed);

/// Per-channel perturbation law for ensemble propagation: a multiplicative
/// level factor ~ N(1, scale_sd) and a ramp time shift ~ N(0, shift_sd) s.
struct BcNoise {
  double scale_sd = 0.0;
  double shift_sd = 0.0;
};

struct BcDistributions {
  BcNoise pressure, flow, power, inlet_temperature;
};

/// Member simulator for covest::propagate_bc_uncertainty: runs this case at
/// theta_nominal with independently perturbed boundary conditions.
covest::MemberSimulator make_bc_member_simulator(const CaseSpec& spec,
                                                 const BcDistributions& bc,
                                                 const Eigen::VectorXd& theta_nominal);

/// 9 cases: 3 assembly analogs (A, B, C) x 3 transient kinds, with ground
/// truth in both variants: a homogeneous theta_star (= hyper_mean) and
/// heterogeneous per-group draws theta ~ N(hyper_mean, hyper_sd).
struct BenchmarkSuite {
  std::vector<CaseSpec> cases;         // 9, ids like "A-FR"
  Eigen::VectorXd theta_star;          // homogeneous truth
  Eigen::MatrixXd theta_star_groups;   // 9 x 4 heterogeneous truth
  Eigen::VectorXd hyper_mean, hyper_sd;
  std::vector<std::string> train_ids;  // 5 groups
  std::vector<std::string> test_ids;   // 4 groups

  const CaseSpec& case_by_id(const std::string& id) const;
  Eigen::Index index_of(const std::string& id) const;
};

BenchmarkSuite make_benchmark_suite(std::uint64_t seed);

}  // namespace iuq::synthsim
