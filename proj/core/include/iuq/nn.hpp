#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iuq::nn {

/// Fully connected perceptron stack: ReLU hidden activations, linear output.
struct MlpModel {
  std::vector<Eigen::Index> layer_sizes;   // [d_in, hidden..., d_out]
  std::vector<Eigen::MatrixXd> weights;    // weights[l]: layer_sizes[l+1] x layer_sizes[l]
  std::vector<Eigen::VectorXd> intercepts; // intercepts[l]: layer_sizes[l+1]

  Eigen::Index input_dim() const { return layer_sizes.front(); }
  Eigen::Index output_dim() const { return layer_sizes.back(); }

  std::string to_json_string() const;
  static MlpModel from_json_string(const std::string& text);
  void save_json(const std::filesystem::path& path) const;
  static MlpModel load_json(const std::filesystem::path& path);
};

/// Scaled uniform fan-in initialization, deterministic in the seed.
MlpModel init_mlp(const std::vector<Eigen::Index>& layer_sizes, std::uint64_t seed);

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x);

/// Batched forward pass; one sample per column.
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs);

/// Mean over the batch of squared error norms plus l2_penalty * sum of
/// squared weight-matrix Frobenius norms (intercepts excluded).
/// `inputs`/`targets` hold one sample per column.
double loss(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            double l2_penalty);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> intercepts;
};

/// Exact gradient of `loss` with respect to every weight and intercept.
Gradients grad_params(const MlpModel& model, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, double l2_penalty);

/// Jacobian d forward / d x, using subgradient 0 at ReLU kinks.
Eigen::MatrixXd grad_input(const MlpModel& model, const Eigen::VectorXd& x);

/// Vector-Jacobian product seed^T * J, one backward sweep. Used by gradient
/// assembly in calibration targets where the full Jacobian is not needed.
Eigen::VectorXd vjp_input(const MlpModel& model, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& seed);

enum class Optimizer { adam, sgd };

struct TrainConfig {
  double l2_penalty = 1e-4;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 2000;
  int early_stop_patience = 50;  // epochs without validation MSE improvement
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct TrainHistory {
  std::vector<double> train_mae, train_mse;
  std::vector<double> val_mae, val_mse;
  int best_epoch = -1;  // epoch whose snapshot was returned
  bool early_stopped = false;

  bool empty() const { return train_mae.empty(); }
};

struct TrainResult {
  MlpModel model;  // snapshot with the best validation MAE
  TrainHistory history;
};

/// Mini-batch training with per-parameter adaptive step sizes (Adam) or plain
/// gradient descent. Inputs/targets hold one sample per ROW (training-set
/// layout). Early stopping monitors validation MSE; the returned model is the
/// epoch snapshot with the lowest validation MAE. Deterministic given the
/// config seed. Non-finite loss raises NumericError with the epoch index.
TrainResult train(const MlpModel& model, const Eigen::MatrixXd& train_inputs,
                  const Eigen::MatrixXd& train_targets, const Eigen::MatrixXd& val_inputs,
                  const Eigen::MatrixXd& val_targets, const TrainConfig& config);

}  // namespace iuq::nn
