#include "iuq/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "iuq/csv.hpp"
#include "iuq/doe.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::surrogate {

std::string backend_name(Backend b) {
  return b == Backend::gp_pca ? "gp_pca" : "mlp";
}

Backend backend_from_name(const std::string& name) {
  if (name == "gp_pca" || name == "gp-pca") return Backend::gp_pca;
  if (name == "mlp") return Backend::mlp;
  throw ValidationError("surrogate: unknown backend '" + name + "'");
}

Surrogate train_gp_pca(const TrainingSet& training, const GpPcaConfig& config) {
  const auto report = validate_training_set(training);
  if (!report.ok()) {
    throw ValidationError("train_gp_pca: " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }

  Surrogate s;
  s.backend = Backend::gp_pca;
  s.case_id = training.case_id;
  s.input_dim = training.inputs.cols();
  s.output_dim = training.outputs.cols();

  // PCA expects features x samples.
  s.pca_model = pca::fit(training.outputs.transpose());
  if (s.pca_model.degenerate) {
    throw NumericError("train_gp_pca: outputs are constant across the design (degenerate PCA)");
  }
  s.pca_model.p_star = pca::select_components(s.pca_model, config.evr_threshold);

  const Eigen::MatrixXd scores =
      pca::transform_matrix(s.pca_model, training.outputs.transpose());  // p* x N
  for (Eigen::Index pc = 0; pc < s.pca_model.p_star; ++pc) {
    gp::GpFitConfig gp_config = config.gp;
    gp_config.seed = config.gp.seed + static_cast<std::uint64_t>(pc);
    try {
      s.score_models.push_back(gp::fit(training.inputs, scores.row(pc).transpose(), gp_config));
    } catch (const std::exception& e) {
      throw NumericError("train_gp_pca: GP fit failed for PC " + std::to_string(pc) + ": " +
                         e.what());
    }
  }
  return s;
}

Surrogate train_mlp(const TrainingSet& training, const TrainingSet& validation,
                    const MlpConfig& config) {
  const auto report = validate_training_set(training);
  if (!report.ok()) {
    throw ValidationError("train_mlp: " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }

  Surrogate s;
  s.backend = Backend::mlp;
  s.case_id = training.case_id;
  s.input_dim = training.inputs.cols();
  s.output_dim = training.outputs.cols();

  std::vector<Eigen::Index> layers;
  layers.push_back(s.input_dim);
  for (auto h : config.hidden) layers.push_back(h);
  layers.push_back(s.output_dim);

  Eigen::MatrixXd train_in = training.inputs;
  Eigen::MatrixXd train_out = training.outputs;
  Eigen::MatrixXd val_in = validation.inputs;
  Eigen::MatrixXd val_out = validation.outputs;
  if (val_in.rows() == 0 && config.validation_fraction > 0.0) {
    // Seeded shuffle split.
    const Eigen::Index n = training.inputs.rows();
    const auto n_val = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::floor(config.validation_fraction * n)));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.train.seed, 17);
    rng.shuffle(order);
    train_in.resize(n - n_val, training.inputs.cols());
    train_out.resize(n - n_val, training.outputs.cols());
    val_in.resize(n_val, training.inputs.cols());
    val_out.resize(n_val, training.outputs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i < n_val) {
        val_in.row(i) = training.inputs.row(order[static_cast<std::size_t>(i)]);
        val_out.row(i) = training.outputs.row(order[static_cast<std::size_t>(i)]);
      } else {
        train_in.row(i - n_val) = training.inputs.row(order[static_cast<std::size_t>(i)]);
        train_out.row(i - n_val) = training.outputs.row(order[static_cast<std::size_t>(i)]);
      }
    }
  }

  const nn::MlpModel init = nn::init_mlp(layers, config.train.seed);
  auto result = nn::train(init, train_in, train_out, val_in, val_out, config.train);
  s.mlp_model = std::move(result.model);
  return s;
}

Eigen::VectorXd predict(const Surrogate& s, const Eigen::VectorXd& theta) {
  if (theta.size() != s.input_dim) throw ValidationError("surrogate: dimension mismatch");
  if (s.backend == Backend::mlp) return nn::forward(s.mlp_model, theta);

  Eigen::VectorXd scores(s.pca_model.p_star);
  const Eigen::MatrixXd point = theta.transpose();
  for (Eigen::Index pc = 0; pc < s.pca_model.p_star; ++pc) {
    scores(pc) = gp::predict_mean(s.score_models[static_cast<std::size_t>(pc)], point)(0);
  }
  return pca::inverse_transform(s.pca_model, scores);
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> predict_with_variance(const Surrogate& s,
                                                                  const Eigen::VectorXd& theta) {
  if (s.backend != Backend::gp_pca) {
    throw ValidationError("surrogate: predictive variance requires the gp_pca backend");
  }
  if (theta.size() != s.input_dim) throw ValidationError("surrogate: dimension mismatch");

  Eigen::VectorXd scores(s.pca_model.p_star);
  Eigen::VectorXd score_var(s.pca_model.p_star);
  const Eigen::MatrixXd point = theta.transpose();
  for (Eigen::Index pc = 0; pc < s.pca_model.p_star; ++pc) {
    const auto pred = gp::predict(s.score_models[static_cast<std::size_t>(pc)], point);
    scores(pc) = pred.mean(0);
    score_var(pc) = std::max(0.0, pred.cov(0, 0));
  }
  const Eigen::MatrixXd basis = s.pca_model.components.topRows(s.pca_model.p_star);  // p* x p
  Eigen::MatrixXd cov = basis.transpose() * score_var.asDiagonal() * basis;
  return {pca::inverse_transform(s.pca_model, scores), std::move(cov)};
}

Eigen::MatrixXd grad_predict(const Surrogate& s, const Eigen::VectorXd& theta) {
  if (s.backend != Backend::mlp) {
    throw ValidationError(
        "surrogate: gradients are unsupported for this backend (mlp required)");
  }
  return nn::grad_input(s.mlp_model, theta);
}

Eigen::VectorXd vjp_predict(const Surrogate& s, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& seed) {
  if (s.backend != Backend::mlp) {
    throw ValidationError(
        "surrogate: gradients are unsupported for this backend (mlp required)");
  }
  return nn::vjp_input(s.mlp_model, theta, seed);
}

TrainingSet run_design(const SimulatorFn& simulate, const Eigen::MatrixXd& points,
                       const std::string& case_id) {
  TrainingSet t;
  t.case_id = case_id;
  t.inputs = points;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::VectorXd out = simulate(points.row(i).transpose());
    if (i == 0) t.outputs.resize(points.rows(), out.size());
    t.outputs.row(i) = out.transpose();
  }
  return t;
}

StudyReport convergence_study(const SimulatorFn& simulate,
                              const std::vector<std::pair<double, double>>& bounds,
                              const StudyConfig& config) {
  if (config.sample_sizes.empty()) throw ValidationError("convergence_study: no sample sizes");
  if (config.test_size < 1) throw ValidationError("convergence_study: test_size must be >= 1");

  const auto d = static_cast<Eigen::Index>(bounds.size());

  // Common held-out test set: uniform random draws, not LHS.
  Rng test_rng(config.seed, 0xFEED);
  Eigen::MatrixXd test_points(config.test_size, d);
  for (int i = 0; i < config.test_size; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto& [low, high] = bounds[static_cast<std::size_t>(j)];
      test_points(i, j) = test_rng.uniform(low, high);
    }
  }
  const TrainingSet test_set = run_design(simulate, test_points, "study_test");

  StudyReport report;
  report.test_size = config.test_size;
  report.output_range = test_set.outputs.maxCoeff() - test_set.outputs.minCoeff();

  // Shared validation draws for mlp early stopping.
  TrainingSet mlp_val;
  {
    Rng val_rng(config.seed, 0xA11D);
    Eigen::MatrixXd val_points(config.mlp_validation_draws, d);
    for (int i = 0; i < config.mlp_validation_draws; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto& [low, high] = bounds[static_cast<std::size_t>(j)];
        val_points(i, j) = val_rng.uniform(low, high);
      }
    }
    mlp_val = run_design(simulate, val_points, "study_val");
  }

  for (const int n : config.sample_sizes) {
    const auto design = doe::lhs_sample(n, bounds, config.seed + static_cast<std::uint64_t>(n));
    const TrainingSet training = run_design(simulate, design.points, "study_train");

    for (const Backend backend : config.backends) {
      StudyCell cell;
      cell.sample_size = n;
      cell.backend = backend;
      try {
        Surrogate s;
        if (backend == Backend::gp_pca) {
          s = train_gp_pca(training, config.gp_pca);
        } else {
          s = train_mlp(training, mlp_val, config.mlp);
        }
        double abs_sum = 0.0;
        for (Eigen::Index i = 0; i < test_set.inputs.rows(); ++i) {
          const Eigen::VectorXd pred = predict(s, test_set.inputs.row(i).transpose());
          abs_sum += (pred - test_set.outputs.row(i).transpose()).cwiseAbs().sum();
        }
        cell.mae = abs_sum / static_cast<double>(test_set.outputs.size());
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

void StudyReport::save_csv(const std::filesystem::path& path) const {
  // Backend encoded numerically (0 = gp_pca, 1 = mlp) to keep the table
  // purely numeric; the sidecar-free format is documented in the README.
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(cells.size()), 4);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    rows(static_cast<Eigen::Index>(i), 0) = cells[i].sample_size;
    rows(static_cast<Eigen::Index>(i), 1) = cells[i].backend == Backend::gp_pca ? 0.0 : 1.0;
    rows(static_cast<Eigen::Index>(i), 2) = cells[i].ok ? cells[i].mae : -1.0;
    rows(static_cast<Eigen::Index>(i), 3) = cells[i].ok ? 1.0 : 0.0;
  }
  csv::write(path, {"n", "backend", "mae", "ok"}, rows);
}

std::string Surrogate::to_json_string() const {
  nlohmann::json j;
  j["type"] = "surrogate";
  j["backend"] = backend_name(backend);
  j["input_dim"] = input_dim;
  j["output_dim"] = output_dim;
  j["case_id"] = case_id;
  if (backend == Backend::gp_pca) {
    j["pca"] = nlohmann::json::parse(pca_model.to_json_string());
    nlohmann::json gps = nlohmann::json::array();
    for (const auto& g : score_models) gps.push_back(nlohmann::json::parse(g.to_json_string()));
    j["score_models"] = std::move(gps);
  } else {
    j["mlp"] = nlohmann::json::parse(mlp_model.to_json_string());
  }
  return j.dump(2);
}

Surrogate Surrogate::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("type", "") != "surrogate") {
    throw ValidationError("surrogate: not a surrogate document");
  }
  Surrogate s;
  s.backend = backend_from_name(j.at("backend").get<std::string>());
  s.input_dim = j.at("input_dim").get<Eigen::Index>();
  s.output_dim = j.at("output_dim").get<Eigen::Index>();
  s.case_id = j.value("case_id", "");
  if (s.backend == Backend::gp_pca) {
    s.pca_model = pca::PcaModel::from_json_string(j.at("pca").dump());
    for (const auto& g : j.at("score_models")) {
      s.score_models.push_back(gp::GpModel::from_json_string(g.dump()));
    }
    if (static_cast<Eigen::Index>(s.score_models.size()) != s.pca_model.p_star) {
      throw ValidationError("surrogate: score model count != p_star");
    }
  } else {
    s.mlp_model = nn::MlpModel::from_json_string(j.at("mlp").dump());
  }
  return s;
}

void Surrogate::save_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("surrogate: cannot write " + path.string());
  out << to_json_string() << '\n';
}

Surrogate Surrogate::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("surrogate: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

}  // namespace iuq::surrogate
