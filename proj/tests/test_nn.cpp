#include <doctest.h>

#include <cmath>

#include "iuq/errors.hpp"
#include "iuq/nn.hpp"
#include "iuq/rng.hpp"

using namespace iuq;

namespace {

// Central finite differences of the loss w.r.t. one parameter.
double fd_loss(nn::MlpModel model, std::size_t layer, Eigen::Index r, Eigen::Index c,
               bool intercept, const Eigen::MatrixXd& in, const Eigen::MatrixXd& out, double l2) {
  const double h = 1e-5;
  double* slot = intercept ? &model.intercepts[layer](r) : &model.weights[layer](r, c);
  const double saved = *slot;
  *slot = saved + h;
  const double up = nn::loss(model, in, out, l2);
  *slot = saved - h;
  const double down = nn::loss(model, in, out, l2);
  *slot = saved;
  return (up - down) / (2.0 * h);
}

nn::MlpModel random_model(const std::vector<Eigen::Index>& sizes, std::uint64_t seed) {
  auto model = nn::init_mlp(sizes, seed);
  Rng rng(seed + 1);
  for (auto& b : model.intercepts) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * rng.normal();
  }
  return model;
}

// Keep pre-activations away from ReLU kinks so finite differences are valid.
bool near_kink(const nn::MlpModel& model, const Eigen::MatrixXd& inputs) {
  const std::size_t layers = model.weights.size();
  Eigen::MatrixXd z = inputs;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    z = (model.weights[l] * z).colwise() + model.intercepts[l];
    if (z.cwiseAbs().minCoeff() < 1e-3) return true;
    z = z.cwiseMax(0.0);
  }
  return false;
}

}  // namespace

TEST_CASE("forward basics") {
  nn::MlpModel zero;
  zero.layer_sizes = {3, 4, 2};
  zero.weights = {Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(2, 4)};
  zero.intercepts = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)};
  CHECK(nn::forward(zero, Eigen::Vector3d(1.0, -2.0, 3.0)).cwiseAbs().maxCoeff() == 0.0);

  nn::MlpModel identity;
  identity.layer_sizes = {3, 3};
  identity.weights = {Eigen::MatrixXd::Identity(3, 3)};
  identity.intercepts = {Eigen::VectorXd::Zero(3)};
  const Eigen::Vector3d x(0.5, -1.5, 2.0);
  CHECK((nn::forward(identity, x) - x).cwiseAbs().maxCoeff() == 0.0);

  // One ReLU unit followed by a linear read-out.
  nn::MlpModel relu;
  relu.layer_sizes = {1, 1, 1};
  relu.weights = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
  relu.intercepts = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  CHECK(nn::forward(relu, Eigen::VectorXd::Constant(1, -1.0))(0) == 0.0);
  CHECK(nn::forward(relu, Eigen::VectorXd::Constant(1, 2.0))(0) == 2.0);
}

TEST_CASE("loss definition") {
  auto model = random_model({2, 3, 2}, 3);
  Rng rng(5);
  Eigen::MatrixXd in(2, 6), out(2, 6);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();

  // Perfect predictions, zero penalty -> zero.
  out = nn::forward_batch(model, in);
  CHECK(nn::loss(model, in, out, 0.0) == doctest::Approx(0.0).epsilon(1e-15));

  // Zero model: loss = mean squared norm of the targets.
  nn::MlpModel zero;
  zero.layer_sizes = {2, 2};
  zero.weights = {Eigen::MatrixXd::Zero(2, 2)};
  zero.intercepts = {Eigen::VectorXd::Zero(2)};
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  CHECK(nn::loss(zero, in, out, 0.0) ==
        doctest::Approx(out.squaredNorm() / 6.0).epsilon(1e-12));

  // Independent recomputation from the definition.
  const double l2 = 0.01;
  double expected = (nn::forward_batch(model, in) - out).squaredNorm() / 6.0;
  for (const auto& w : model.weights) expected += l2 * w.squaredNorm();
  CHECK(nn::loss(model, in, out, l2) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("grad_params vanishes at a perfect linear fit") {
  // Linear net fitted exactly: residual zero, penalty zero.
  nn::MlpModel model;
  model.layer_sizes = {2, 2};
  model.weights = {(Eigen::MatrixXd(2, 2) << 1.0, 2.0, -0.5, 0.75).finished()};
  model.intercepts = {Eigen::Vector2d(0.1, -0.2)};
  Rng rng(7);
  Eigen::MatrixXd in(2, 10);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
  const Eigen::MatrixXd out = nn::forward_batch(model, in);
  const auto grads = nn::grad_params(model, in, out, 0.0);
  for (const auto& g : grads.weights) CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
  for (const auto& g : grads.intercepts) CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("grad_params matches central finite differences") {
  Rng rng(11);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto model = random_model({4, 8, 8, 12}, seed);
    Eigen::MatrixXd in(4, 5), out(12, 5);
    do {
      for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
    } while (near_kink(model, in));
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();

    const double l2 = 1e-3;
    const auto grads = nn::grad_params(model, in, out, l2);
    for (std::size_t layer = 0; layer < model.weights.size(); ++layer) {
      for (int probe = 0; probe < 6; ++probe) {
        const auto r = static_cast<Eigen::Index>(
            rng.uniform_int(static_cast<std::uint64_t>(model.weights[layer].rows())));
        const auto c = static_cast<Eigen::Index>(
            rng.uniform_int(static_cast<std::uint64_t>(model.weights[layer].cols())));
        const double fd = fd_loss(model, layer, r, c, false, in, out, l2);
        const double an = grads.weights[layer](r, c);
        CHECK(std::abs(an - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
        const double fdb = fd_loss(model, layer, r, 0, true, in, out, l2);
        CHECK(std::abs(grads.intercepts[layer](r) - fdb) < 1e-4 * std::max(1.0, std::abs(fdb)));
      }
    }
  }
}

TEST_CASE("duplicating the batch leaves the gradient unchanged") {
  const auto model = random_model({3, 5, 4}, 13);
  Rng rng(17);
  Eigen::MatrixXd in(3, 4), out(4, 4);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();

  Eigen::MatrixXd in2(3, 8), out2(4, 8);
  in2 << in, in;
  out2 << out, out;
  const auto g1 = nn::grad_params(model, in, out, 1e-4);
  const auto g2 = nn::grad_params(model, in2, out2, 1e-4);
  for (std::size_t l = 0; l < g1.weights.size(); ++l) {
    CHECK((g1.weights[l] - g2.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("grad_input basics and finite differences") {
  nn::MlpModel linear;
  linear.layer_sizes = {3, 2};
  linear.weights = {(Eigen::MatrixXd(2, 3) << 1.0, -2.0, 0.5, 0.0, 3.0, 1.5).finished()};
  linear.intercepts = {Eigen::Vector2d(0.4, -0.1)};
  CHECK((nn::grad_input(linear, Eigen::Vector3d(1.0, 2.0, 3.0)) - linear.weights[0])
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // All-negative first-layer pre-activations kill the Jacobian.
  nn::MlpModel dead;
  dead.layer_sizes = {2, 3, 2};
  dead.weights = {Eigen::MatrixXd::Identity(3, 2) * 1.0, Eigen::MatrixXd::Ones(2, 3)};
  dead.intercepts = {Eigen::VectorXd::Constant(3, -100.0), Eigen::VectorXd::Zero(2)};
  CHECK(nn::grad_input(dead, Eigen::Vector2d(1.0, 1.0)).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(19);
  for (std::uint64_t seed : {4ULL, 5ULL, 6ULL}) {
    const auto model = random_model({4, 8, 8, 12}, seed);
    Eigen::MatrixXd x(4, 1);
    do {
      for (Eigen::Index i = 0; i < 4; ++i) x(i, 0) = rng.normal();
    } while (near_kink(model, x));

    const Eigen::MatrixXd jac = nn::grad_input(model, x.col(0));
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < 4; ++j) {
      Eigen::VectorXd up = x.col(0), down = x.col(0);
      up(j) += h;
      down(j) -= h;
      const Eigen::VectorXd fd = (nn::forward(model, up) - nn::forward(model, down)) / (2.0 * h);
      CHECK((jac.col(j) - fd).cwiseAbs().maxCoeff() <
            1e-4 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }

    // vjp agrees with the materialized Jacobian.
    Eigen::VectorXd seed_vec(12);
    for (Eigen::Index i = 0; i < 12; ++i) seed_vec(i) = rng.normal();
    const Eigen::VectorXd vjp = nn::vjp_input(model, x.col(0), seed_vec);
    CHECK((vjp - jac.transpose() * seed_vec).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("training recovers a linear map down to the noise level") {
  Rng rng(23);
  const Eigen::MatrixXd a = (Eigen::MatrixXd(2, 3) << 0.5, -1.0, 2.0, 1.5, 0.25, -0.75).finished();
  const double noise = 0.01;
  Eigen::MatrixXd in(300, 3), out(300, 2);
  for (Eigen::Index i = 0; i < 300; ++i) {
    Eigen::Vector3d x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    in.row(i) = x.transpose();
    out.row(i) = (a * x).transpose();
    for (Eigen::Index j = 0; j < 2; ++j) out(i, j) += noise * rng.normal();
  }
  Eigen::MatrixXd vin = in.topRows(50), vout = out.topRows(50);

  const auto init = nn::init_mlp({3, 2}, 1);
  nn::TrainConfig config;
  config.max_epochs = 400;
  config.learning_rate = 5e-3;
  config.l2_penalty = 0.0;
  config.seed = 2;
  const auto result = nn::train(init, in, out, vin, vout, config);
  REQUIRE(!result.history.empty());
  const double final_mae = result.history.val_mae[static_cast<std::size_t>(
      result.history.best_epoch)];
  CHECK(final_mae < 3.0 * noise);
}

TEST_CASE("max_epochs = 0 returns the initialized model and empty history") {
  const auto init = nn::init_mlp({2, 4, 2}, 9);
  nn::TrainConfig config;
  config.max_epochs = 0;
  const auto result = nn::train(init, Eigen::MatrixXd::Zero(6, 2), Eigen::MatrixXd::Zero(6, 2),
                                Eigen::MatrixXd(), Eigen::MatrixXd(), config);
  CHECK(result.history.empty());
  for (std::size_t l = 0; l < init.weights.size(); ++l) {
    CHECK(result.model.weights[l] == init.weights[l]);
  }
}

TEST_CASE("divergent training reports the epoch") {
  Rng rng(29);
  Eigen::MatrixXd in(20, 2), out(20, 2);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal() * 10.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal() * 10.0;
  const auto init = nn::init_mlp({2, 8, 2}, 3);
  nn::TrainConfig config;
  config.optimizer = nn::Optimizer::sgd;
  config.learning_rate = 1e6;  // guaranteed blow-up
  config.max_epochs = 50;
  CHECK_THROWS_AS((void)nn::train(init, in, out, Eigen::MatrixXd(), Eigen::MatrixXd(), config),
                  NumericError);
}

TEST_CASE("full-batch descent with a small fixed step is non-increasing") {
  Rng rng(31);
  Eigen::MatrixXd in(40, 2), out(40, 3);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  const auto init = nn::init_mlp({2, 6, 3}, 5);
  nn::TrainConfig config;
  config.optimizer = nn::Optimizer::sgd;
  config.learning_rate = 1e-3;
  config.batch_size = 40;  // full batch
  config.max_epochs = 60;
  config.early_stop_patience = 1000;
  const auto result = nn::train(init, in, out, Eigen::MatrixXd(), Eigen::MatrixXd(), config);
  for (std::size_t e = 1; e < result.history.train_mse.size(); ++e) {
    CHECK(result.history.train_mse[e] <= result.history.train_mse[e - 1] + 1e-12);
  }
}

TEST_CASE("history is consistent with the returned snapshot") {
  Rng rng(37);
  Eigen::MatrixXd in(80, 2), out(80, 2), vin(20, 2), vout(20, 2);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = 0.5 * rng.normal();
  for (Eigen::Index i = 0; i < vin.size(); ++i) vin.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < vout.size(); ++i) vout.data()[i] = 0.5 * rng.normal();

  const auto init = nn::init_mlp({2, 6, 2}, 7);
  nn::TrainConfig config;
  config.max_epochs = 120;
  config.seed = 3;
  const auto result = nn::train(init, in, out, vin, vout, config);
  REQUIRE(result.history.best_epoch >= 0);

  const double re_eval =
      (nn::forward_batch(result.model, vin.transpose()) - vout.transpose()).cwiseAbs().mean();
  const double reported = result.history.val_mae[static_cast<std::size_t>(
      result.history.best_epoch)];
  CHECK(re_eval == doctest::Approx(reported).epsilon(1e-12));
  // No history entry claims a validation MAE the stored model cannot achieve.
  for (double mae : result.history.val_mae) CHECK(mae >= re_eval - 1e-12);
}

TEST_CASE("training is deterministic in the seed") {
  Rng rng(41);
  Eigen::MatrixXd in(30, 2), out(30, 2);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  const auto init = nn::init_mlp({2, 4, 2}, 11);
  nn::TrainConfig config;
  config.max_epochs = 30;
  config.seed = 5;
  const auto a = nn::train(init, in, out, Eigen::MatrixXd(), Eigen::MatrixXd(), config);
  const auto b = nn::train(init, in, out, Eigen::MatrixXd(), Eigen::MatrixXd(), config);
  for (std::size_t l = 0; l < a.model.weights.size(); ++l) {
    CHECK(a.model.weights[l] == b.model.weights[l]);
  }
}

TEST_CASE("json round trip preserves the model exactly") {
  const auto model = random_model({3, 5, 4}, 43);
  const auto restored = nn::MlpModel::from_json_string(model.to_json_string());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    CHECK(restored.weights[l] == model.weights[l]);
    CHECK(restored.intercepts[l] == model.intercepts[l]);
  }
}

TEST_CASE("shape validation") {
  const auto model = nn::init_mlp({3, 4, 2}, 1);
  CHECK_THROWS_AS((void)nn::forward(model, Eigen::VectorXd::Zero(4)), ValidationError);
  CHECK_THROWS_AS((void)nn::init_mlp({3}, 1), ValidationError);
  CHECK_THROWS_AS((void)nn::init_mlp({3, 0, 2}, 1), ValidationError);
}
