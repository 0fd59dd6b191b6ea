#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "iuq/errors.hpp"
#include "iuq/pca.hpp"
#include "iuq/rng.hpp"

using namespace iuq;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("rank-1 matrix concentrates all variance in one component") {
  Rng rng(5);
  Eigen::VectorXd direction = random_matrix(6, 1, 5);
  Eigen::MatrixXd data(6, 40);
  for (Eigen::Index c = 0; c < 40; ++c) data.col(c) = rng.normal() * direction;
  const auto model = pca::fit(data);
  CHECK(model.explained_variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index i = 1; i < model.explained_variance_ratio.size(); ++i) {
    CHECK(model.explained_variance_ratio(i) == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("components match a brute-force covariance eigendecomposition") {
  const Eigen::MatrixXd data = random_matrix(6, 50, 17);
  const auto model = pca::fit(data);

  // Independent oracle: eigendecomposition of the sample covariance.
  const Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / 49.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  REQUIRE(es.info() == Eigen::Success);

  const Eigen::Index p = 6;
  double eig_total = es.eigenvalues().sum();
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd expected = es.eigenvectors().col(p - 1 - i);  // descending order
    Eigen::VectorXd actual = model.components.row(i).transpose();
    if (expected.dot(actual) < 0.0) actual = -actual;  // sign-normalized comparison
    CHECK((actual - expected).cwiseAbs().maxCoeff() < 1e-8);
    const double expected_ratio = es.eigenvalues()(p - 1 - i) / eig_total;
    CHECK(model.explained_variance_ratio(i) == doctest::Approx(expected_ratio).epsilon(1e-8));
  }
}

TEST_CASE("constant matrix is flagged degenerate") {
  const Eigen::MatrixXd data = Eigen::MatrixXd::Constant(5, 20, 3.25);
  const auto model = pca::fit(data);
  CHECK(model.degenerate);
  CHECK_THROWS_AS((void)pca::select_components(model, 0.999), NumericError);
}

TEST_CASE("select_components cumulative-sum arithmetic") {
  pca::PcaModel model;
  model.explained_variance_ratio.resize(5);
  model.explained_variance_ratio << 0.9, 0.09, 0.008, 0.0015, 0.0005;
  model.singular_values = model.explained_variance_ratio;
  CHECK(pca::select_components(model, 0.999) == 4);

  pca::PcaModel one;
  one.explained_variance_ratio.resize(1);
  one.explained_variance_ratio << 1.0;
  CHECK(pca::select_components(one, 0.999) == 1);

  CHECK_THROWS_AS((void)pca::select_components(model, 0.0), ValidationError);
  CHECK_THROWS_AS((void)pca::select_components(model, 1.5), ValidationError);
}

TEST_CASE("transform centering and orthonormality") {
  const Eigen::MatrixXd data = random_matrix(8, 30, 23);
  auto model = pca::fit(data);

  CHECK(pca::transform(model, model.mean).cwiseAbs().maxCoeff() < 1e-10);

  const double c = 2.75;
  const Eigen::VectorXd shifted = model.mean + c * model.components.row(2).transpose();
  const Eigen::VectorXd scores = pca::transform(model, shifted);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    CHECK(scores(i) == doctest::Approx(i == 2 ? c : 0.0).epsilon(1e-9));
  }

  // Direct dense-multiply oracle.
  const Eigen::VectorXd a = random_matrix(8, 1, 29);
  const Eigen::VectorXd expected = model.components * (a - model.mean);
  CHECK((pca::transform(model, a) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("component rows are orthonormal and sign-fixed") {
  const auto model = pca::fit(random_matrix(7, 25, 31));
  const Eigen::MatrixXd gram = model.components * model.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
        1e-10);
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.components.cols(); ++c) {
      if (std::abs(model.components(r, c)) > 1e-12) {
        CHECK(model.components(r, c) > 0.0);
        break;
      }
    }
  }
}

TEST_CASE("inverse_transform round trips") {
  const Eigen::MatrixXd data = random_matrix(6, 40, 37);
  auto model = pca::fit(data);

  CHECK((pca::inverse_transform(model, Eigen::VectorXd::Zero(model.p_star)) - model.mean)
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  const Eigen::VectorXd a = random_matrix(6, 1, 41);
  const Eigen::VectorXd back = pca::inverse_transform(model, pca::transform(model, a));
  CHECK((back - a).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("truncated reconstruction error decreases monotonically in p*") {
  const Eigen::MatrixXd data = random_matrix(6, 40, 43);
  auto model = pca::fit(data);
  const Eigen::VectorXd a = random_matrix(6, 1, 47);
  double previous = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 1; k <= model.components.rows(); ++k) {
    model.p_star = k;
    const double err = (pca::inverse_transform(model, pca::transform(model, a)) - a).norm();
    CHECK(err <= previous + 1e-12);
    previous = err;
  }
}

TEST_CASE("reconstruction error equals the discarded spectrum") {
  const Eigen::MatrixXd data = random_matrix(5, 24, 53);
  auto model = pca::fit(data);
  const auto n = static_cast<double>(data.cols());
  for (Eigen::Index k = 1; k <= model.components.rows(); ++k) {
    model.p_star = k;
    double frob2 = 0.0;
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const Eigen::VectorXd rebuilt =
          pca::inverse_transform(model, pca::transform(model, data.col(c)));
      frob2 += (rebuilt - data.col(c)).squaredNorm();
    }
    const double expected = model.singular_values.tail(model.singular_values.size() - k)
                                .array().square().sum();
    CHECK(frob2 / n == doctest::Approx(expected / n).epsilon(1e-8));
  }
}

TEST_CASE("transform rejects wrong lengths") {
  const auto model = pca::fit(random_matrix(4, 10, 59));
  CHECK_THROWS_AS((void)pca::transform(model, Eigen::VectorXd::Zero(5)), ValidationError);
  CHECK_THROWS_AS((void)pca::inverse_transform(model, Eigen::VectorXd::Zero(model.p_star + 1)),
                  ValidationError);
}

TEST_CASE("json round trip preserves the model") {
  const auto model = pca::fit(random_matrix(5, 18, 61));
  const auto restored = pca::PcaModel::from_json_string(model.to_json_string());
  CHECK(restored.mean == model.mean);
  CHECK(restored.components == model.components);
  CHECK(restored.singular_values == model.singular_values);
  CHECK(restored.p_star == model.p_star);
}
