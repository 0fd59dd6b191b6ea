#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "iuq/core.hpp"
#include "iuq/gp.hpp"
#include "iuq/nn.hpp"
#include "iuq/pca.hpp"

namespace iuq::surrogate {

enum class Backend { gp_pca, mlp };

std::string backend_name(Backend b);
Backend backend_from_name(const std::string& name);

/// theta -> flattened output map over either a PCA-compressed bank of GPs
/// (one per retained score) or a single MLP.
struct Surrogate {
  Backend backend = Backend::gp_pca;
  Eigen::Index input_dim = 0;
  Eigen::Index output_dim = 0;
  std::string case_id;

  pca::PcaModel pca_model;               // gp_pca only
  std::vector<gp::GpModel> score_models; // gp_pca only, one per retained PC
  nn::MlpModel mlp_model;                // mlp only

  std::string to_json_string() const;
  static Surrogate from_json_string(const std::string& text);
  void save_json(const std::filesystem::path& path) const;
  static Surrogate load_json(const std::filesystem::path& path);
};

struct GpPcaConfig {
  double evr_threshold = 0.999;
  gp::GpFitConfig gp;
};

/// PCA on outputs^T (features x samples), p* by explained variance, then one
/// GP per retained score trained on (inputs, score row).
Surrogate train_gp_pca(const TrainingSet& training, const GpPcaConfig& config);

struct MlpConfig {
  std::vector<Eigen::Index> hidden = {32, 32};
  nn::TrainConfig train;
  double validation_fraction = 0.1;  // used when no validation set is given
};

/// MLP surrogate on raw flattened outputs. When `validation` is empty a
/// seeded fraction of the training set is held out for early stopping.
Surrogate train_mlp(const TrainingSet& training, const TrainingSet& validation,
                    const MlpConfig& config);

Eigen::VectorXd predict(const Surrogate& surrogate, const Eigen::VectorXd& theta);

/// Mean and emulator covariance. gp_pca maps per-score predictive variance
/// through the PCA basis; the mlp backend has no variance and errors.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> predict_with_variance(const Surrogate& surrogate,
                                                                  const Eigen::VectorXd& theta);

/// Output Jacobian (k x d). mlp only; gp_pca reports an unsupported
/// capability error.
Eigen::MatrixXd grad_predict(const Surrogate& surrogate, const Eigen::VectorXd& theta);

/// seed^T * Jacobian without materializing it; mlp only.
Eigen::VectorXd vjp_predict(const Surrogate& surrogate, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& seed);

using SimulatorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct StudyCell {
  int sample_size = 0;
  Backend backend = Backend::gp_pca;
  double mae = 0.0;
  bool ok = false;
  std::string error;  // set when a training failure was recorded
};

struct StudyReport {
  std::vector<StudyCell> cells;
  double output_range = 0.0;  // max - min over the held-out simulator outputs
  int test_size = 0;

  void save_csv(const std::filesystem::path& path) const;
};

struct StudyConfig {
  std::vector<int> sample_sizes;
  int test_size = 50;
  std::vector<Backend> backends = {Backend::gp_pca, Backend::mlp};
  std::uint64_t seed = 0;
  GpPcaConfig gp_pca;
  MlpConfig mlp;
  int mlp_validation_draws = 50;  // extra random simulator draws for early stopping
};

/// Trains on an LHS design of each size, evaluates pooled MAE on `test_size`
/// uniform random held-out simulator runs. Training failures are recorded in
/// the affected cell; the study continues.
StudyReport convergence_study(const SimulatorFn& simulate,
                              const std::vector<std::pair<double, double>>& bounds,
                              const StudyConfig& config);

/// Build a training set by running the simulator over a design matrix.
TrainingSet run_design(const SimulatorFn& simulate, const Eigen::MatrixXd& points,
                       const std::string& case_id);

}  // namespace iuq::surrogate
