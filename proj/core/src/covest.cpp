#include "iuq/covest.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>

#include "iuq/csv.hpp"
#include "iuq/errors.hpp"

#include <nlohmann/json.hpp>

namespace iuq::covest {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Lower Cholesky factor, or empty matrix on failure.
Eigen::MatrixXd try_cholesky(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return {};
  return llt.matrixL();
}

}  // namespace

CovarianceModel CovarianceModel::diagonalized() const {
  CovarianceModel d;
  d.matrix = matrix.diagonal().asDiagonal();
  d.nugget = nugget;
  d.mode = CovMode::diagonal;
  d.case_id = case_id;
  d.cholesky = d.matrix.diagonal().cwiseSqrt().asDiagonal();
  return d;
}

Ensemble propagate_bc_uncertainty(const MemberSimulator& simulate_member, int members,
                                  std::uint64_t seed, const std::string& case_id,
                                  std::vector<std::string>* warnings) {
  if (members < 2) throw ValidationError("propagate_bc_uncertainty: need at least 2 members");

  std::vector<Eigen::VectorXd> rows;
  rows.reserve(static_cast<std::size_t>(members));
  for (int m = 0; m < members; ++m) {
    Rng rng(seed, static_cast<std::uint64_t>(m) + 1);
    auto out = simulate_member(rng);
    if (!out.has_value()) {
      if (warnings) {
        warnings->push_back(case_id + ": ensemble member " + std::to_string(m) +
                            " failed, dropped");
      }
      continue;
    }
    rows.push_back(std::move(*out));
  }
  if (rows.size() < 2) {
    throw NumericError("propagate_bc_uncertainty: fewer than 2 surviving members for " + case_id);
  }

  Ensemble e;
  e.case_id = case_id;
  e.members.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != e.members.cols()) {
      throw NumericError("propagate_bc_uncertainty: inconsistent member lengths");
    }
    e.members.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return e;
}

Eigen::MatrixXd estimate_cov(const Ensemble& ensemble) {
  const Eigen::Index m = ensemble.members.rows();
  if (m < 2) throw ValidationError("estimate_cov: need at least 2 members");
  if (!ensemble.members.allFinite()) throw ValidationError("estimate_cov: non-finite member");
  const Eigen::RowVectorXd mu = ensemble.members.colwise().mean();
  const Eigen::MatrixXd centered = ensemble.members.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(m - 1);
}

Eigen::MatrixXd estimate_blockdiag_cov(const Ensemble& ensemble, Eigen::Index locations,
                                       Eigen::Index steps) {
  const Eigen::Index k = ensemble.members.cols();
  if (locations * steps != k) {
    throw ValidationError("estimate_blockdiag_cov: locations*steps != member length");
  }
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index l = 0; l < locations; ++l) {
    Ensemble block;
    block.case_id = ensemble.case_id;
    block.members = ensemble.members.middleCols(l * steps, steps);
    sigma.block(l * steps, l * steps, steps, steps) = estimate_cov(block);
  }
  return sigma;
}

double default_nugget(const Eigen::MatrixXd& sigma) {
  const double mean_sd = sigma.diagonal().cwiseMax(0.0).cwiseSqrt().mean();
  const double s = 0.01 * mean_sd;
  return s * s;
}

CovarianceModel regularize_cov(const Eigen::MatrixXd& sigma, double nugget, CovMode mode,
                               const std::string& case_id) {
  if (sigma.rows() != sigma.cols()) throw ValidationError("regularize_cov: matrix not square");
  if (!sigma.allFinite()) throw ValidationError("regularize_cov: non-finite entries");
  if (!sigma.isApprox(sigma.transpose(), 1e-10)) {
    throw ValidationError("regularize_cov: matrix not symmetric");
  }
  if (nugget < 0.0) throw ValidationError("regularize_cov: negative nugget");

  const Eigen::Index k = sigma.rows();
  CovarianceModel model;
  model.nugget = nugget;
  model.mode = mode;
  model.case_id = case_id;

  Eigen::MatrixXd base = 0.5 * (sigma + sigma.transpose());
  if (mode == CovMode::diagonal) {
    const Eigen::VectorXd diag = base.diagonal();
    base = diag.asDiagonal();
  }
  model.matrix = base + nugget * Eigen::MatrixXd::Identity(k, k);

  model.cholesky = try_cholesky(model.matrix);
  if (model.cholesky.size() == 0) {
    // Clip eigenvalues and retry once.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.matrix);
    if (es.info() != Eigen::Success) throw NumericError("regularize_cov: eigendecomposition failed");
    const double floor = 1e-10 * model.matrix.trace() / static_cast<double>(k);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    model.matrix = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    model.matrix = 0.5 * (model.matrix + model.matrix.transpose());
    model.eigenvalue_clipped = true;
    model.cholesky = try_cholesky(model.matrix);
    if (model.cholesky.size() == 0) {
      throw NumericError("regularize_cov: matrix not positive definite after repair");
    }
  }
  return model;
}

Eigen::VectorXd cov_solve(const CovarianceModel& cov, const Eigen::VectorXd& r) {
  if (cov.cholesky.rows() != r.size()) throw ValidationError("cov_solve: dimension mismatch");
  const auto& L = cov.cholesky;
  Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(r);
  return L.triangularView<Eigen::Lower>().transpose().solve(y);
}

double cov_log_det(const CovarianceModel& cov) {
  return 2.0 * cov.cholesky.diagonal().array().log().sum();
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                  const CovarianceModel& cov) {
  if (x.size() != mu.size() || x.size() != cov.dim()) {
    throw ValidationError("mvn_logpdf: dimension mismatch");
  }
  const Eigen::VectorXd r = x - mu;
  const Eigen::VectorXd half = cov.cholesky.triangularView<Eigen::Lower>().solve(r);
  const double quad = half.squaredNorm();
  const double k = static_cast<double>(x.size());
  return -0.5 * k * std::log(kTwoPi) - 0.5 * cov_log_det(cov) - 0.5 * quad;
}

void CovarianceModel::save_json(const std::filesystem::path& csv_path) const {
  std::vector<std::string> header(static_cast<std::size_t>(matrix.cols()));
  for (std::size_t i = 0; i < header.size(); ++i) header[i] = "c" + std::to_string(i);
  csv::write(csv_path, header, matrix);

  nlohmann::json meta;
  meta["case_id"] = case_id;
  meta["nugget"] = nugget;
  meta["mode"] = mode == CovMode::full ? "full" : "diagonal";
  meta["eigenvalue_clipped"] = eigenvalue_clipped;
  meta["dim"] = matrix.rows();
  std::ofstream out(csv_path.string() + ".json", std::ios::binary);
  if (!out) throw ValidationError("covariance: cannot write sidecar for " + csv_path.string());
  out << meta.dump(2) << '\n';
}

CovarianceModel load_json_impl(const std::filesystem::path& csv_path) {
  const auto table = csv::read(csv_path);
  std::ifstream in(csv_path.string() + ".json");
  if (!in) throw ValidationError("covariance: missing sidecar for " + csv_path.string());
  nlohmann::json meta = nlohmann::json::parse(in);

  const double nugget = meta.at("nugget").get<double>();
  const CovMode mode = meta.at("mode").get<std::string>() == "diagonal" ? CovMode::diagonal
                                                                        : CovMode::full;
  // The stored matrix already contains the nugget; rebuild the factor only.
  CovarianceModel model = regularize_cov(table.values, 0.0, mode, meta.at("case_id"));
  model.nugget = nugget;
  return model;
}

CovarianceModel CovarianceModel::load_json(const std::filesystem::path& csv_path) {
  return load_json_impl(csv_path);
}

}  // namespace iuq::covest
