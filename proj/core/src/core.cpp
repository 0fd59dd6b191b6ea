#include "iuq/core.hpp"

#include <cmath>
#include <utility>

#include "iuq/csv.hpp"
#include "iuq/errors.hpp"

namespace iuq {

Eigen::VectorXd flatten(const TimeSeriesGrid& grid) {
  const auto report = validate_grid(grid, "grid");
  if (!report.ok()) {
    throw ValidationError("flatten: " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }
  const Eigen::Index L = grid.location_count();
  const Eigen::Index T = grid.step_count();
  Eigen::VectorXd flat(L * T);
  for (Eigen::Index l = 0; l < L; ++l) flat.segment(l * T, T) = grid.values.row(l).transpose();
  return flat;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, Eigen::Index locations,
                          Eigen::Index steps) {
  if (locations < 1 || steps < 1 || flat.size() != locations * steps) {
    throw ValidationError("unflatten: length " + std::to_string(flat.size()) +
                          " does not equal locations*steps");
  }
  Eigen::MatrixXd values(locations, steps);
  for (Eigen::Index l = 0; l < locations; ++l) {
    values.row(l) = flat.segment(l * steps, steps).transpose();
  }
  return values;
}

ValidationReport validate_grid(const TimeSeriesGrid& grid, const std::string& prefix) {
  ValidationReport report;
  const Eigen::Index L = grid.location_count();
  const Eigen::Index T = grid.step_count();

  if (T < 2) report.errors.push_back({prefix + ".times", "need at least 2 time steps"});
  if (grid.times.size() != T) {
    report.errors.push_back({prefix + ".times", "times length does not match value columns"});
  }
  if (static_cast<Eigen::Index>(grid.locations.size()) != L) {
    report.errors.push_back({prefix + ".locations", "location names do not match value rows"});
  }
  if (!grid.times.allFinite()) {
    report.errors.push_back({prefix + ".times", "non-finite time"});
  } else {
    for (Eigen::Index t = 0; t + 1 < grid.times.size(); ++t) {
      if (grid.times(t + 1) <= grid.times(t)) {
        report.errors.push_back({prefix + ".times", "times not strictly increasing"});
        break;
      }
    }
  }
  if (!grid.values.allFinite()) {
    report.errors.push_back({prefix + ".values", "non-finite value"});
  } else if ((grid.values.array() < 0.0).any() || (grid.values.array() > 1.0).any()) {
    report.warnings.push_back({prefix + ".values", "value outside [0,1]"});
  }
  return report;
}

ValidationReport validate_case(const TransientCase& c) {
  ValidationReport report;
  if (c.id.empty()) report.errors.push_back({"id", "empty case id"});

  auto merge = [&report](ValidationReport sub) {
    for (auto& e : sub.errors) report.errors.push_back(std::move(e));
    for (auto& w : sub.warnings) report.warnings.push_back(std::move(w));
  };
  merge(validate_grid(c.boundary_conditions, "boundary_conditions"));
  // Boundary conditions are on physical scales; the [0,1] heuristic is for
  // measurements only.
  std::erase_if(report.warnings,
                [](const Violation& v) { return v.field.starts_with("boundary_conditions"); });
  merge(validate_grid(c.measurements, "measurements"));

  const Eigen::Index k = c.measurements.location_count() * c.measurements.step_count();
  if (c.flattened.size() != k) {
    report.errors.push_back({"flattened", "flatten mismatch: length != locations*steps"});
  } else if (c.measurements.values.allFinite() && c.flattened.allFinite()) {
    const Eigen::MatrixXd rebuilt =
        unflatten(c.flattened, c.measurements.location_count(), c.measurements.step_count());
    if (rebuilt != c.measurements.values) {
      report.errors.push_back({"flattened", "flatten mismatch: entries differ from measurements"});
    }
  }
  if (!c.flattened.allFinite()) {
    report.errors.push_back({"flattened", "non-finite value"});
  }
  if (c.covariance.has_value() && c.covariance->dim() != c.flattened.size()) {
    report.errors.push_back({"covariance", "covariance dimension != flattened length"});
  }
  if (c.boundary_conditions.step_count() >= 2 && c.measurements.step_count() >= 2 &&
      c.boundary_conditions.times.size() == c.measurements.times.size() &&
      c.boundary_conditions.times != c.measurements.times) {
    report.errors.push_back({"boundary_conditions.times", "time grid differs from measurements"});
  }
  return report;
}

ValidationReport validate_training_set(const TrainingSet& t) {
  ValidationReport report;
  const Eigen::Index n = t.inputs.rows();
  const Eigen::Index d = t.inputs.cols();
  if (n < d + 1) report.errors.push_back({"inputs", "need at least d+1 rows"});
  if (t.outputs.rows() != n) report.errors.push_back({"outputs", "row count differs from inputs"});
  if (!t.inputs.allFinite()) report.errors.push_back({"inputs", "non-finite value"});
  if (!t.outputs.allFinite()) report.errors.push_back({"outputs", "non-finite value"});
  return report;
}

TransientCase make_case(std::string id, TimeSeriesGrid boundary_conditions,
                        TimeSeriesGrid measurements) {
  TransientCase c;
  c.id = std::move(id);
  c.boundary_conditions = std::move(boundary_conditions);
  c.measurements = std::move(measurements);
  c.flattened = flatten(c.measurements);
  const auto report = validate_case(c);
  if (!report.ok()) {
    throw ValidationError("make_case(" + c.id + "): " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }
  return c;
}

void write_grid_csv(const std::filesystem::path& path, const TimeSeriesGrid& grid) {
  std::vector<std::string> header;
  header.reserve(grid.locations.size() + 1);
  header.push_back("time");
  for (const auto& loc : grid.locations) header.push_back(loc);

  Eigen::MatrixXd rows(grid.step_count(), grid.location_count() + 1);
  rows.col(0) = grid.times;
  rows.rightCols(grid.location_count()) = grid.values.transpose();
  csv::write(path, header, rows);
}

TimeSeriesGrid read_grid_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.header.front() != "time") {
    throw ValidationError("grid csv: first column must be 'time' in " + path.string());
  }
  if (table.cols() < 2) {
    throw ValidationError("grid csv: need at least one location column in " + path.string());
  }
  TimeSeriesGrid grid;
  grid.times = table.values.col(0);
  grid.locations.assign(table.header.begin() + 1, table.header.end());
  grid.values = table.values.rightCols(table.cols() - 1).transpose();
  const auto report = validate_grid(grid, path.string());
  if (!report.ok()) {
    throw ValidationError("grid csv: " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }
  return grid;
}

}  // namespace iuq
