#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace iuq::csv {

/// Numeric CSV with a single header row. All data cells must parse as doubles.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x columns

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index column_index(const std::string& name) const;  // -1 if absent
};

Table read(const std::filesystem::path& path);

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Eigen::Ref<const Eigen::MatrixXd>& values);

std::string to_string(const std::vector<std::string>& header,
                      const Eigen::Ref<const Eigen::MatrixXd>& values);

}  // namespace iuq::csv
