#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iuq/covest.hpp"

namespace iuq {

/// Dimensionless physical-model-parameter multipliers.
struct ParameterVector {
  Eigen::VectorXd values;
  std::vector<std::string> names;

  Eigen::Index dim() const { return values.size(); }
};

/// Output series at L measurement locations over a common time axis.
/// `values` is L x T: one row per location, one column per time step.
struct TimeSeriesGrid {
  Eigen::VectorXd times;                // strictly increasing, seconds
  std::vector<std::string> locations;   // size L
  Eigen::MatrixXd values;               // L x T

  Eigen::Index location_count() const { return values.rows(); }
  Eigen::Index step_count() const { return values.cols(); }
};

/// One transient: boundary conditions, measured series, and the flattened
/// observation vector used by the likelihood.
struct TransientCase {
  std::string id;
  TimeSeriesGrid boundary_conditions;
  TimeSeriesGrid measurements;
  Eigen::VectorXd flattened;  // length L*T, location-major
  std::optional<covest::CovarianceModel> covariance;
};

/// Design/response pairs for surrogate training.
struct TrainingSet {
  Eigen::MatrixXd inputs;   // N x d
  Eigen::MatrixXd outputs;  // N x k
  std::string case_id;
};

/// Row-major (location-major, then time) flattening of the measurement grid.
/// This order fixes the covariance index convention everywhere in the engine.
Eigen::VectorXd flatten(const TimeSeriesGrid& grid);

/// Inverse of flatten for a grid with `locations` rows and `steps` columns.
Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, Eigen::Index locations, Eigen::Index steps);

struct Violation {
  std::string field;
  std::string rule;
};

/// Errors break type invariants; warnings flag suspicious but legal data
/// (measurements outside [0,1] are warnings: the engine is simulator-agnostic).
struct ValidationReport {
  std::vector<Violation> errors;
  std::vector<Violation> warnings;
  bool ok() const { return errors.empty(); }
};

ValidationReport validate_grid(const TimeSeriesGrid& grid, const std::string& field_prefix);
ValidationReport validate_case(const TransientCase& c);
ValidationReport validate_training_set(const TrainingSet& t);

/// Construct a case with the flattened vector filled in; throws on invariant
/// violations.
TransientCase make_case(std::string id, TimeSeriesGrid boundary_conditions,
                        TimeSeriesGrid measurements);

/// CSV format: header `time,<loc1>,<loc2>,...`; one row per time step.
void write_grid_csv(const std::filesystem::path& path, const TimeSeriesGrid& grid);
TimeSeriesGrid read_grid_csv(const std::filesystem::path& path);

}  // namespace iuq
