#include "iuq/gp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "iuq/errors.hpp"
#include "iuq/optim.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::gp {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;
const double kJitterLadder[] = {1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

double scaled_distance(const Kernel& kernel, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (kernel.lengthscales.size() == 1) {
    return (x - y).norm() / kernel.lengthscales(0);
  }
  if (kernel.lengthscales.size() != x.size()) {
    throw ValidationError("kernel: lengthscale count must be 1 or input dimension");
  }
  return ((x - y).array() / kernel.lengthscales.array()).matrix().norm();
}

double eval_rho(const Kernel& kernel, double rho) {
  const double s2 = kernel.amplitude * kernel.amplitude;
  switch (kernel.family) {
    case KernelFamily::rbf:
      return s2 * std::exp(-0.5 * rho * rho);
    case KernelFamily::power_exponential:
      return s2 * std::exp(-0.5 * std::pow(rho, kernel.exponent));
    case KernelFamily::matern: {
      if (kernel.nu == 1.5) {
        const double a = std::sqrt(3.0) * rho;
        return s2 * (1.0 + a) * std::exp(-a);
      }
      if (kernel.nu == 2.5) {
        const double a = std::sqrt(5.0) * rho;
        return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
      }
      throw ValidationError("kernel: matern nu must be 1.5 or 2.5");
    }
  }
  throw ValidationError("kernel: unknown family");
}

struct Factorization {
  Eigen::MatrixXd chol;
  double jitter = 0.0;
  bool ok = false;
};

Factorization factorize_gram(const Eigen::MatrixXd& gram) {
  Factorization f;
  for (double jitter : kJitterLadder) {
    Eigen::MatrixXd k = gram;
    k.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) {
      f.chol = llt.matrixL();
      f.jitter = jitter;
      f.ok = true;
      return f;
    }
  }
  return f;
}

double lml_from_factor(const Eigen::MatrixXd& chol, const Eigen::VectorXd& targets,
                       Eigen::VectorXd* weights_out = nullptr) {
  const Eigen::VectorXd half = chol.triangularView<Eigen::Lower>().solve(targets);
  const double log_det = 2.0 * chol.diagonal().array().log().sum();
  const double n = static_cast<double>(targets.size());
  if (weights_out) {
    *weights_out = chol.triangularView<Eigen::Lower>().transpose().solve(half);
  }
  return -0.5 * half.squaredNorm() - 0.5 * log_det - 0.5 * n * kLog2Pi;
}

Kernel kernel_from_log_params(const GpFitConfig& config, const Eigen::VectorXd& log_params) {
  Kernel kernel;
  kernel.family = config.family;
  kernel.exponent = config.exponent;
  kernel.nu = config.nu;
  kernel.amplitude = std::exp(log_params(0));
  kernel.lengthscales = log_params.tail(log_params.size() - 1).array().exp();
  return kernel;
}

}  // namespace

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw ValidationError("kernel_eval: dimension mismatch");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("kernel_eval: non-finite input");
  return eval_rho(kernel, scaled_distance(kernel, x, y));
}

Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& a,
                            const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ValidationError("gram_matrix: dimension mismatch");
  Eigen::MatrixXd gram(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      gram(i, j) = eval_rho(kernel, scaled_distance(kernel, a.row(i), b.row(j)));
    }
  }
  return gram;
}

double log_marginal_likelihood(const Kernel& kernel, const Eigen::MatrixXd& inputs,
                               const Eigen::VectorXd& targets, double* jitter_used) {
  const auto factor = factorize_gram(gram_matrix(kernel, inputs, inputs));
  if (!factor.ok) return -std::numeric_limits<double>::infinity();
  if (jitter_used) *jitter_used = factor.jitter;
  return lml_from_factor(factor.chol, targets);
}

GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
            const GpFitConfig& config) {
  if (inputs.rows() != targets.size()) throw ValidationError("gp::fit: row count mismatch");
  if (inputs.rows() < 2) throw ValidationError("gp::fit: need at least 2 points");
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw ValidationError("gp::fit: non-finite training data");
  }

  GpModel model;

  // Collapse exact duplicate rows; a noise-free GP cannot hold two targets at
  // one input.
  std::map<std::vector<double>, std::pair<double, int>> unique;
  bool had_duplicates = false;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    std::vector<double> key(inputs.row(i).begin(), inputs.row(i).end());
    auto [it, inserted] = unique.try_emplace(key, std::make_pair(targets(i), 1));
    if (!inserted) {
      it->second.first += targets(i);
      it->second.second += 1;
      had_duplicates = true;
    }
  }
  Eigen::MatrixXd x = inputs;
  Eigen::VectorXd y = targets;
  if (had_duplicates) {
    model.warnings.push_back("duplicate training inputs collapsed to mean targets");
    x.resize(static_cast<Eigen::Index>(unique.size()), inputs.cols());
    y.resize(static_cast<Eigen::Index>(unique.size()));
    Eigen::Index r = 0;
    for (const auto& [key, acc] : unique) {
      x.row(r) = Eigen::Map<const Eigen::VectorXd>(key.data(), inputs.cols()).transpose();
      y(r) = acc.first / acc.second;
      ++r;
    }
  }

  const Eigen::Index n = x.rows();
  const Eigen::Index n_length = config.ard ? x.cols() : 1;

  // Data-driven centers for the random restarts.
  const double sd_y = std::max(std::sqrt((y.array() - y.mean()).square().sum() /
                                         std::max<double>(1.0, static_cast<double>(n - 1))),
                               1e-6 * std::max(1.0, y.cwiseAbs().maxCoeff()));
  double median_dist = 0.0;
  {
    std::vector<double> dists;
    const Eigen::Index cap = std::min<Eigen::Index>(n, 64);
    for (Eigen::Index i = 0; i < cap; ++i) {
      for (Eigen::Index j = i + 1; j < cap; ++j) dists.push_back((x.row(i) - x.row(j)).norm());
    }
    std::sort(dists.begin(), dists.end());
    median_dist = dists.empty() ? 1.0 : dists[dists.size() / 2];
    if (median_dist <= 0.0) median_dist = 1.0;
  }

  auto objective = [&](const Eigen::VectorXd& log_params) {
    // Bound the search box; extreme hyperparameters overflow the Gram.
    if (log_params.minCoeff() < -25.0 || log_params.maxCoeff() > 25.0) {
      return std::numeric_limits<double>::infinity();
    }
    const Kernel kernel = kernel_from_log_params(config, log_params);
    return -log_marginal_likelihood(kernel, x, y);
  };

  Rng rng(config.seed);
  Eigen::VectorXd best_params;
  double best_value = std::numeric_limits<double>::infinity();
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start(1 + n_length);
    if (r == 0) {
      start(0) = std::log(sd_y);
      for (Eigen::Index i = 0; i < n_length; ++i) start(1 + i) = std::log(median_dist);
    } else {
      start(0) = std::log(sd_y) + rng.uniform(-2.0, 2.0);
      for (Eigen::Index i = 0; i < n_length; ++i) {
        start(1 + i) = std::log(median_dist) + rng.uniform(-2.5, 2.5);
      }
    }
    const auto result = nelder_mead(objective, start, 0.7, config.max_evaluations, 1e-9);
    if (result.value < best_value) {
      best_value = result.value;
      best_params = result.x;
    }
  }
  if (!std::isfinite(best_value)) {
    throw NumericError("gp::fit: no hyperparameter setting produced a positive-definite Gram");
  }

  model.kernel = kernel_from_log_params(config, best_params);
  model.training_inputs = std::move(x);
  model.training_targets = std::move(y);

  const auto factor = factorize_gram(gram_matrix(model.kernel, model.training_inputs,
                                                 model.training_inputs));
  if (!factor.ok) throw NumericError("gp::fit: Gram not positive definite at optimum");
  model.chol = factor.chol;
  model.jitter = factor.jitter;
  model.log_marginal_likelihood =
      lml_from_factor(model.chol, model.training_targets, &model.weights);
  return model;
}

GpPrediction predict(const GpModel& model, const Eigen::MatrixXd& test_inputs) {
  if (test_inputs.cols() != model.training_inputs.cols()) {
    throw ValidationError("gp::predict: dimension mismatch");
  }
  const Eigen::MatrixXd cross = gram_matrix(model.kernel, test_inputs, model.training_inputs);
  GpPrediction out;
  out.mean = cross * model.weights;
  const Eigen::MatrixXd v =
      model.chol.triangularView<Eigen::Lower>().solve(cross.transpose());
  Eigen::MatrixXd cov = gram_matrix(model.kernel, test_inputs, test_inputs) - v.transpose() * v;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

Eigen::VectorXd predict_mean(const GpModel& model, const Eigen::MatrixXd& test_inputs) {
  if (test_inputs.cols() != model.training_inputs.cols()) {
    throw ValidationError("gp::predict: dimension mismatch");
  }
  return gram_matrix(model.kernel, test_inputs, model.training_inputs) * model.weights;
}

namespace {

std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::rbf: return "rbf";
    case KernelFamily::power_exponential: return "power_exponential";
    case KernelFamily::matern: return "matern";
  }
  return "rbf";
}

KernelFamily family_from_name(const std::string& s) {
  if (s == "rbf") return KernelFamily::rbf;
  if (s == "power_exponential") return KernelFamily::power_exponential;
  if (s == "matern") return KernelFamily::matern;
  throw ValidationError("gp: unknown kernel family '" + s + "'");
}

}  // namespace

std::string GpModel::to_json_string() const {
  nlohmann::json j;
  j["type"] = "gp";
  j["kernel"]["family"] = family_name(kernel.family);
  j["kernel"]["amplitude"] = kernel.amplitude;
  j["kernel"]["lengthscales"] =
      std::vector<double>(kernel.lengthscales.data(),
                          kernel.lengthscales.data() + kernel.lengthscales.size());
  j["kernel"]["exponent"] = kernel.exponent;
  j["kernel"]["nu"] = kernel.nu;
  j["jitter"] = jitter;
  j["log_marginal_likelihood"] = log_marginal_likelihood;
  std::vector<std::vector<double>> xi(static_cast<std::size_t>(training_inputs.rows()));
  for (Eigen::Index r = 0; r < training_inputs.rows(); ++r) {
    xi[static_cast<std::size_t>(r)].assign(training_inputs.row(r).begin(),
                                           training_inputs.row(r).end());
  }
  j["training_inputs"] = xi;
  j["training_targets"] = std::vector<double>(training_targets.data(),
                                              training_targets.data() + training_targets.size());
  j["warnings"] = warnings;
  return j.dump(2);
}

GpModel GpModel::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("type", "") != "gp") throw ValidationError("gp: not a gp model document");
  GpModel m;
  m.kernel.family = family_from_name(j.at("kernel").at("family").get<std::string>());
  m.kernel.amplitude = j.at("kernel").at("amplitude").get<double>();
  const auto ls = j.at("kernel").at("lengthscales").get<std::vector<double>>();
  m.kernel.lengthscales =
      Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  m.kernel.exponent = j.at("kernel").at("exponent").get<double>();
  m.kernel.nu = j.at("kernel").at("nu").get<double>();
  m.jitter = j.at("jitter").get<double>();
  m.warnings = j.value("warnings", std::vector<std::string>{});

  const auto xi = j.at("training_inputs").get<std::vector<std::vector<double>>>();
  const auto yt = j.at("training_targets").get<std::vector<double>>();
  if (xi.empty() || xi.size() != yt.size()) throw ValidationError("gp: corrupt training data");
  m.training_inputs.resize(static_cast<Eigen::Index>(xi.size()),
                           static_cast<Eigen::Index>(xi.front().size()));
  for (std::size_t r = 0; r < xi.size(); ++r) {
    m.training_inputs.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::VectorXd>(
        xi[r].data(), static_cast<Eigen::Index>(xi[r].size())).transpose();
  }
  m.training_targets =
      Eigen::Map<const Eigen::VectorXd>(yt.data(), static_cast<Eigen::Index>(yt.size()));

  // Rebuild the cached factor instead of trusting serialized floats.
  const auto factor = factorize_gram(gram_matrix(m.kernel, m.training_inputs, m.training_inputs));
  if (!factor.ok) throw NumericError("gp: deserialized Gram not positive definite");
  m.chol = factor.chol;
  m.jitter = factor.jitter;
  m.log_marginal_likelihood = lml_from_factor(m.chol, m.training_targets, &m.weights);
  return m;
}

void GpModel::save_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("gp: cannot write " + path.string());
  out << to_json_string() << '\n';
}

GpModel GpModel::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("gp: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

}  // namespace iuq::gp
