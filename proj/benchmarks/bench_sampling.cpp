#include <benchmark/benchmark.h>

#include "iuq/sampler.hpp"

namespace {

iuq::sampler::TargetDensity std_normal_target(Eigen::Index dim) {
  iuq::sampler::TargetDensity target;
  target.dim = dim;
  for (Eigen::Index i = 0; i < dim; ++i) {
    target.names.push_back("z" + std::to_string(i));
    target.transforms.push_back(iuq::sampler::VarTransform::identity());
  }
  target.logp = [](const Eigen::VectorXd& z) { return -0.5 * z.squaredNorm(); };
  target.grad_logp = [](const Eigen::VectorXd& z) { return Eigen::VectorXd(-z); };
  return target;
}

void BM_NutsStdNormal(benchmark::State& state) {
  const auto target = std_normal_target(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::sampler::nuts_sample(target, 1, 200, 200, 42));
  }
}
BENCHMARK(BM_NutsStdNormal)->Arg(4)->Arg(16);

}  // namespace
