#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

namespace iuq::pca {

/// SVD-based principal component model of a p x N data matrix (features by
/// samples). Rows are centered before decomposition; the row means are stored
/// so the inverse transform maps back to the original space.
struct PcaModel {
  Eigen::VectorXd mean;             // length p
  Eigen::MatrixXd components;       // min(p,N) x p, orthonormal rows, descending variance
  Eigen::VectorXd singular_values;  // descending
  Eigen::VectorXd explained_variance_ratio;
  Eigen::Index p = 0;               // original feature dimension
  Eigen::Index p_star = 0;          // retained components (defaults to all)
  Eigen::Index n_samples = 0;
  bool degenerate = false;          // all-constant input, ratios undefined

  std::string to_json_string() const;
  static PcaModel from_json_string(const std::string& text);
  void save_json(const std::filesystem::path& path) const;
  static PcaModel load_json(const std::filesystem::path& path);
};

/// Fit on a p x N matrix. Signs are fixed so the first nonzero entry of each
/// component row is nonnegative.
PcaModel fit(const Eigen::MatrixXd& data);

/// Smallest p* whose cumulative explained variance ratio reaches `threshold`.
Eigen::Index select_components(const PcaModel& model, double threshold);

/// Scores of one observation: components(0..p*-1) * (a - mean).
Eigen::VectorXd transform(const PcaModel& model, const Eigen::VectorXd& a);

/// mean + components(0..p*-1)^T * scores.
Eigen::VectorXd inverse_transform(const PcaModel& model, const Eigen::VectorXd& scores);

/// Scores for all columns of a p x N matrix (p* x N result).
Eigen::MatrixXd transform_matrix(const PcaModel& model, const Eigen::MatrixXd& data);

}  // namespace iuq::pca
