#include <benchmark/benchmark.h>

#include "iuq/covest.hpp"
#include "iuq/gp.hpp"
#include "iuq/pca.hpp"
#include "iuq/rng.hpp"

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  iuq::Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void BM_PcaFit(benchmark::State& state) {
  const Eigen::MatrixXd data = random_matrix(120, 400, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::pca::fit(data));
  }
}
BENCHMARK(BM_PcaFit);

void BM_GramMatrix(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::MatrixXd x = random_matrix(n, 4, 5);
  iuq::gp::Kernel kernel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::gp::gram_matrix(kernel, x, x));
  }
}
BENCHMARK(BM_GramMatrix)->Arg(100)->Arg(400);

void BM_MvnLogpdf(benchmark::State& state) {
  const Eigen::Index k = 120;
  Eigen::MatrixXd a = random_matrix(k, k, 11);
  const Eigen::MatrixXd sigma = a * a.transpose() / static_cast<double>(k);
  const auto model = iuq::covest::regularize_cov(sigma, 1e-6);
  const Eigen::VectorXd x = random_matrix(k, 1, 13);
  const Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iuq::covest::mvn_logpdf(x, mu, model));
  }
}
BENCHMARK(BM_MvnLogpdf);

}  // namespace
