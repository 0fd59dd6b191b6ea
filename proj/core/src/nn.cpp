#include "iuq/nn.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "iuq/errors.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::nn {

namespace {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
  std::vector<Eigen::MatrixXd> post;  // post-activations, post[0] = input
};

// ReLU on hidden layers, identity on the last.
ForwardCache forward_cached(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  const std::size_t layers = model.weights.size();
  ForwardCache cache;
  cache.pre.resize(layers);
  cache.post.resize(layers + 1);
  cache.post[0] = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    cache.pre[l] = (model.weights[l] * cache.post[l]).colwise() + model.intercepts[l];
    cache.post[l + 1] = (l + 1 < layers) ? cache.pre[l].cwiseMax(0.0) : cache.pre[l];
  }
  return cache;
}

void check_shapes(const MlpModel& model) {
  if (model.layer_sizes.size() < 2) throw ValidationError("mlp: need at least input and output");
  if (model.weights.size() != model.layer_sizes.size() - 1 ||
      model.intercepts.size() != model.weights.size()) {
    throw ValidationError("mlp: layer count mismatch");
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (model.weights[l].rows() != model.layer_sizes[l + 1] ||
        model.weights[l].cols() != model.layer_sizes[l] ||
        model.intercepts[l].size() != model.layer_sizes[l + 1]) {
      throw ValidationError("mlp: weight shape mismatch at layer " + std::to_string(l));
    }
  }
}

double entry_mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return (pred - target).cwiseAbs().mean();
}

double entry_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return (pred - target).array().square().mean();
}

}  // namespace

MlpModel init_mlp(const std::vector<Eigen::Index>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ValidationError("init_mlp: need at least two layer sizes");
  for (auto s : layer_sizes) {
    if (s < 1) throw ValidationError("init_mlp: layer sizes must be positive");
  }
  MlpModel model;
  model.layer_sizes = layer_sizes;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto rows = layer_sizes[l + 1];
    const auto cols = layer_sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-limit, limit);
    }
    model.weights.push_back(std::move(w));
    model.intercepts.push_back(Eigen::VectorXd::Zero(rows));
  }
  return model;
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  check_shapes(model);
  if (inputs.rows() != model.input_dim()) throw ValidationError("mlp forward: length mismatch");
  const std::size_t layers = model.weights.size();
  Eigen::MatrixXd z = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    z = (model.weights[l] * z).colwise() + model.intercepts[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
  }
  return z;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x) {
  return forward_batch(model, x);
}

double loss(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            double l2_penalty) {
  if (inputs.cols() == 0) throw ValidationError("mlp loss: empty batch");
  if (targets.cols() != inputs.cols() || targets.rows() != model.output_dim()) {
    throw ValidationError("mlp loss: target shape mismatch");
  }
  const Eigen::MatrixXd pred = forward_batch(model, inputs);
  double value = (pred - targets).squaredNorm() / static_cast<double>(inputs.cols());
  for (const auto& w : model.weights) value += l2_penalty * w.squaredNorm();
  return value;
}

Gradients grad_params(const MlpModel& model, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, double l2_penalty) {
  check_shapes(model);
  if (inputs.cols() == 0) throw ValidationError("mlp grad: empty batch");
  const auto batch = static_cast<double>(inputs.cols());
  const std::size_t layers = model.weights.size();
  const ForwardCache cache = forward_cached(model, inputs);

  Gradients grads;
  grads.weights.resize(layers);
  grads.intercepts.resize(layers);

  Eigen::MatrixXd delta = 2.0 / batch * (cache.pre[layers - 1] - targets);
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = delta * cache.post[l].transpose() + 2.0 * l2_penalty * model.weights[l];
    grads.intercepts[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (model.weights[l].transpose() * delta).array() *
              (cache.pre[l - 1].array() > 0.0).cast<double>();
    }
  }
  return grads;
}

Eigen::MatrixXd grad_input(const MlpModel& model, const Eigen::VectorXd& x) {
  check_shapes(model);
  if (x.size() != model.input_dim()) throw ValidationError("mlp grad_input: length mismatch");
  const std::size_t layers = model.weights.size();

  Eigen::MatrixXd jac = model.weights[0];
  Eigen::VectorXd z = x;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const Eigen::VectorXd pre = model.weights[l] * z + model.intercepts[l];
    const Eigen::VectorXd mask = (pre.array() > 0.0).cast<double>();
    jac = model.weights[l + 1] * mask.asDiagonal() * jac;
    z = pre.cwiseMax(0.0);
  }
  return jac;
}

Eigen::VectorXd vjp_input(const MlpModel& model, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& seed) {
  check_shapes(model);
  if (seed.size() != model.output_dim()) throw ValidationError("mlp vjp: seed length mismatch");
  const std::size_t layers = model.weights.size();

  std::vector<Eigen::VectorXd> pre(layers);
  Eigen::VectorXd z = x;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = model.weights[l] * z + model.intercepts[l];
    if (l + 1 < layers) z = pre[l].cwiseMax(0.0);
  }

  Eigen::VectorXd v = seed;
  for (std::size_t l = layers; l-- > 0;) {
    v = model.weights[l].transpose() * v;
    if (l > 0) v = v.array() * (pre[l - 1].array() > 0.0).cast<double>();
  }
  return v;
}

TrainResult train(const MlpModel& model, const Eigen::MatrixXd& train_inputs,
                  const Eigen::MatrixXd& train_targets, const Eigen::MatrixXd& val_inputs,
                  const Eigen::MatrixXd& val_targets, const TrainConfig& config) {
  check_shapes(model);
  if (config.batch_size < 1) throw ValidationError("train: batch_size must be positive");
  if (config.max_epochs < 0) throw ValidationError("train: negative max_epochs");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ValidationError("train: learning_rate must be positive and finite");
  }
  if (config.l2_penalty < 0.0) throw ValidationError("train: negative l2_penalty");
  if (train_inputs.cols() != model.input_dim() || train_targets.cols() != model.output_dim() ||
      train_inputs.rows() != train_targets.rows()) {
    throw ValidationError("train: training set shape mismatch");
  }
  if (val_inputs.rows() > 0 &&
      (val_inputs.cols() != model.input_dim() || val_targets.cols() != model.output_dim() ||
       val_inputs.rows() != val_targets.rows())) {
    throw ValidationError("train: validation set shape mismatch");
  }

  TrainResult result;
  result.model = model;
  if (config.max_epochs == 0) return result;

  // Column-per-sample layout for batched algebra.
  const Eigen::MatrixXd x_train = train_inputs.transpose();
  const Eigen::MatrixXd y_train = train_targets.transpose();
  const Eigen::MatrixXd x_val = val_inputs.transpose();
  const Eigen::MatrixXd y_val = val_targets.transpose();
  const bool has_val = x_val.cols() > 0;

  MlpModel net = model;
  const std::size_t layers = net.weights.size();

  std::vector<Eigen::MatrixXd> m_w(layers), v_w(layers);
  std::vector<Eigen::VectorXd> m_b(layers), v_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    m_w[l] = Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols());
    v_w[l] = m_w[l];
    m_b[l] = Eigen::VectorXd::Zero(net.intercepts[l].size());
    v_b[l] = m_b[l];
  }

  Rng rng(config.seed);
  const auto n = x_train.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  double best_val_mae = std::numeric_limits<double>::infinity();
  double best_monitor_mse = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  long step = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
      Eigen::MatrixXd bx(x_train.rows(), size);
      Eigen::MatrixXd by(y_train.rows(), size);
      for (Eigen::Index i = 0; i < size; ++i) {
        bx.col(i) = x_train.col(order[static_cast<std::size_t>(start + i)]);
        by.col(i) = y_train.col(order[static_cast<std::size_t>(start + i)]);
      }
      const Gradients g = grad_params(net, bx, by, config.l2_penalty);
      ++step;
      if (config.optimizer == Optimizer::sgd) {
        for (std::size_t l = 0; l < layers; ++l) {
          net.weights[l] -= config.learning_rate * g.weights[l];
          net.intercepts[l] -= config.learning_rate * g.intercepts[l];
        }
      } else {
        const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
        for (std::size_t l = 0; l < layers; ++l) {
          m_w[l] = config.adam_beta1 * m_w[l] + (1.0 - config.adam_beta1) * g.weights[l];
          v_w[l] = config.adam_beta2 * v_w[l].array().matrix() +
                   (1.0 - config.adam_beta2) * g.weights[l].array().square().matrix();
          net.weights[l].array() -= config.learning_rate * (m_w[l].array() / bc1) /
                                    ((v_w[l].array() / bc2).sqrt() + config.adam_epsilon);
          m_b[l] = config.adam_beta1 * m_b[l] + (1.0 - config.adam_beta1) * g.intercepts[l];
          v_b[l] = config.adam_beta2 * v_b[l].array().matrix() +
                   (1.0 - config.adam_beta2) * g.intercepts[l].array().square().matrix();
          net.intercepts[l].array() -= config.learning_rate * (m_b[l].array() / bc1) /
                                       ((v_b[l].array() / bc2).sqrt() + config.adam_epsilon);
        }
      }
    }

    const Eigen::MatrixXd train_pred = forward_batch(net, x_train);
    const double tr_mae = entry_mae(train_pred, y_train);
    const double tr_mse = entry_mse(train_pred, y_train);
    if (!std::isfinite(tr_mse)) {
      throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
    }
    result.history.train_mae.push_back(tr_mae);
    result.history.train_mse.push_back(tr_mse);

    double monitor_mse = tr_mse;
    double monitor_mae = tr_mae;
    if (has_val) {
      const Eigen::MatrixXd val_pred = forward_batch(net, x_val);
      monitor_mae = entry_mae(val_pred, y_val);
      monitor_mse = entry_mse(val_pred, y_val);
      result.history.val_mae.push_back(monitor_mae);
      result.history.val_mse.push_back(monitor_mse);
    }

    if (monitor_mae < best_val_mae) {
      best_val_mae = monitor_mae;
      result.model = net;
      result.history.best_epoch = epoch;
    }
    if (monitor_mse < best_monitor_mse - 1e-15) {
      best_monitor_mse = monitor_mse;
      epochs_since_improvement = 0;
    } else if (++epochs_since_improvement > config.early_stop_patience) {
      result.history.early_stopped = true;
      break;
    }
  }
  return result;
}

std::string MlpModel::to_json_string() const {
  check_shapes(*this);
  nlohmann::json j;
  j["type"] = "mlp";
  j["layer_sizes"] = layer_sizes;
  nlohmann::json layers_json = nlohmann::json::array();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    nlohmann::json layer;
    std::vector<std::vector<double>> w(static_cast<std::size_t>(weights[l].rows()));
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      w[static_cast<std::size_t>(r)].assign(weights[l].row(r).begin(), weights[l].row(r).end());
    }
    layer["weights"] = w;
    layer["intercepts"] =
        std::vector<double>(intercepts[l].data(), intercepts[l].data() + intercepts[l].size());
    layers_json.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers_json);
  return j.dump(2);
}

MlpModel MlpModel::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("type", "") != "mlp") throw ValidationError("mlp: not an mlp model document");
  MlpModel m;
  m.layer_sizes = j.at("layer_sizes").get<std::vector<Eigen::Index>>();
  for (const auto& layer : j.at("layers")) {
    const auto w = layer.at("weights").get<std::vector<std::vector<double>>>();
    const auto b = layer.at("intercepts").get<std::vector<double>>();
    if (w.empty()) throw ValidationError("mlp: empty weight matrix");
    Eigen::MatrixXd wm(static_cast<Eigen::Index>(w.size()),
                       static_cast<Eigen::Index>(w.front().size()));
    for (std::size_t r = 0; r < w.size(); ++r) {
      wm.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::VectorXd>(
          w[r].data(), static_cast<Eigen::Index>(w[r].size())).transpose();
    }
    m.weights.push_back(std::move(wm));
    m.intercepts.push_back(
        Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  }
  check_shapes(m);
  return m;
}

void MlpModel::save_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("mlp: cannot write " + path.string());
  out << to_json_string() << '\n';
}

MlpModel MlpModel::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("mlp: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

}  // namespace iuq::nn
