#include "iuq/pca.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>

#include "iuq/errors.hpp"

#include <nlohmann/json.hpp>

namespace iuq::pca {

namespace {

void to_json_vec(nlohmann::json& j, const char* key, const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  j[key] = out;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PcaModel fit(const Eigen::MatrixXd& data) {
  const Eigen::Index p = data.rows();
  const Eigen::Index n = data.cols();
  if (n < 2) throw ValidationError("pca::fit: need at least 2 samples");
  if (!data.allFinite()) throw ValidationError("pca::fit: non-finite entries");

  PcaModel model;
  model.p = p;
  model.n_samples = n;
  model.mean = data.rowwise().mean();

  const Eigen::MatrixXd centered = data.colwise() - model.mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  model.singular_values = svd.singularValues();
  model.components = svd.matrixU().transpose();

  const double total = model.singular_values.squaredNorm();
  if (total <= 1e-300) {
    model.degenerate = true;
    model.explained_variance_ratio = Eigen::VectorXd::Zero(model.singular_values.size());
  } else {
    model.explained_variance_ratio = model.singular_values.array().square() / total;
  }

  // SVD signs are arbitrary; make the first nonzero entry of each row
  // nonnegative so repeated fits are bit-identical.
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.components.cols(); ++c) {
      const double v = model.components(r, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0.0) model.components.row(r) = -model.components.row(r);
        break;
      }
    }
  }

  model.p_star = model.components.rows();
  return model;
}

Eigen::Index select_components(const PcaModel& model, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw ValidationError("pca::select_components: threshold must be in (0, 1]");
  }
  if (model.degenerate) {
    throw NumericError("pca::select_components: degenerate model (zero variance)");
  }
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < model.explained_variance_ratio.size(); ++i) {
    cumulative += model.explained_variance_ratio(i);
    if (cumulative >= threshold - 1e-12) return i + 1;
  }
  return model.explained_variance_ratio.size();
}

Eigen::VectorXd transform(const PcaModel& model, const Eigen::VectorXd& a) {
  if (a.size() != model.p) throw ValidationError("pca::transform: length mismatch");
  return model.components.topRows(model.p_star) * (a - model.mean);
}

Eigen::MatrixXd transform_matrix(const PcaModel& model, const Eigen::MatrixXd& data) {
  if (data.rows() != model.p) throw ValidationError("pca::transform_matrix: row mismatch");
  return model.components.topRows(model.p_star) * (data.colwise() - model.mean);
}

Eigen::VectorXd inverse_transform(const PcaModel& model, const Eigen::VectorXd& scores) {
  if (scores.size() != model.p_star) {
    throw ValidationError("pca::inverse_transform: length mismatch");
  }
  return model.mean + model.components.topRows(model.p_star).transpose() * scores;
}

std::string PcaModel::to_json_string() const {
  nlohmann::json j;
  j["type"] = "pca";
  j["p"] = p;
  j["p_star"] = p_star;
  j["n_samples"] = n_samples;
  j["degenerate"] = degenerate;
  to_json_vec(j, "mean", mean);
  to_json_vec(j, "singular_values", singular_values);
  to_json_vec(j, "explained_variance_ratio", explained_variance_ratio);
  std::vector<std::vector<double>> comp(static_cast<std::size_t>(components.rows()));
  for (Eigen::Index r = 0; r < components.rows(); ++r) {
    comp[static_cast<std::size_t>(r)].assign(components.row(r).begin(), components.row(r).end());
  }
  j["components"] = comp;
  return j.dump(2);
}

PcaModel PcaModel::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("type", "") != "pca") throw ValidationError("pca: not a pca model document");
  PcaModel m;
  m.p = j.at("p").get<Eigen::Index>();
  m.p_star = j.at("p_star").get<Eigen::Index>();
  m.n_samples = j.at("n_samples").get<Eigen::Index>();
  m.degenerate = j.at("degenerate").get<bool>();
  m.mean = vec_from_json(j.at("mean"));
  m.singular_values = vec_from_json(j.at("singular_values"));
  m.explained_variance_ratio = vec_from_json(j.at("explained_variance_ratio"));
  const auto comp = j.at("components").get<std::vector<std::vector<double>>>();
  m.components.resize(static_cast<Eigen::Index>(comp.size()), m.p);
  for (std::size_t r = 0; r < comp.size(); ++r) {
    if (static_cast<Eigen::Index>(comp[r].size()) != m.p) {
      throw ValidationError("pca: component row length mismatch");
    }
    m.components.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const Eigen::VectorXd>(comp[r].data(), m.p).transpose();
  }
  return m;
}

void PcaModel::save_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("pca: cannot write " + path.string());
  out << to_json_string() << '\n';
}

PcaModel PcaModel::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("pca: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

}  // namespace iuq::pca
