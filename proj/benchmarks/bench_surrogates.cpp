#include <benchmark/benchmark.h>

#include "iuq/nn.hpp"
#include "iuq/rng.hpp"
#include "iuq/synthsim.hpp"

namespace {

void BM_SynthsimSimulate(benchmark::State& state) {
  const auto suite = iuq::synthsim::make_benchmark_suite(1);
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::synthsim::simulate_flat(theta, suite.cases.front()));
  }
}
BENCHMARK(BM_SynthsimSimulate);

void BM_MlpForward(benchmark::State& state) {
  const auto model = iuq::nn::init_mlp({4, 32, 32, 120}, 3);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 1.2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::nn::forward(model, x));
  }
}
BENCHMARK(BM_MlpForward);

void BM_MlpGradInput(benchmark::State& state) {
  const auto model = iuq::nn::init_mlp({4, 32, 32, 120}, 3);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 1.2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::nn::grad_input(model, x));
  }
}
BENCHMARK(BM_MlpGradInput);

void BM_MlpTrainEpoch(benchmark::State& state) {
  iuq::Rng rng(9);
  Eigen::MatrixXd inputs(256, 4), targets(256, 120);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.uniform(0.0, 5.0);
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = rng.uniform();
  const auto model = iuq::nn::init_mlp({4, 32, 32, 120}, 3);
  iuq::nn::TrainConfig config;
  config.max_epochs = 1;
  config.early_stop_patience = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        iuq::nn::train(model, inputs, targets, Eigen::MatrixXd(), Eigen::MatrixXd(), config));
  }
}
BENCHMARK(BM_MlpTrainEpoch);

}  // namespace
