#include "acceptance.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace {

struct Entry {
  int number;
  std::string title;
  std::function<bool(acceptance::Checker&)> fn;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> all = {
      {1, "PCA round-trip and eigendecomposition agreement",
       acceptance::criterion_pca_correctness},
      {2, "PCA compresses the 120-dim transient family to <= 5 components",
       acceptance::criterion_pca_dimension_reduction},
      {3, "GP interpolation, marginal likelihood, and sin(x)*x regression",
       acceptance::criterion_gp_exactness},
      {4, "network gradients match finite differences on 100 configurations",
       acceptance::criterion_nn_gradients},
      {5, "surrogate MAE below 1% of range at N=400 and improves with data",
       acceptance::criterion_surrogate_convergence},
      {6, "NUTS recovers correlated Gaussian and conjugate posteriors",
       acceptance::criterion_sampler_correctness},
      {7, "single-level calibration covers the generating parameters",
       acceptance::criterion_single_level_recovery},
      {8, "full covariance beats diagonal in the transition window",
       acceptance::criterion_covariance_effect},
      {9, "hierarchical predictive improves held-out error and covers the truth",
       acceptance::criterion_hierarchical_improvement},
      {10, "iterative resampling extends bounds past the original range",
       acceptance::criterion_range_extension},
      {11, "pipeline outputs are byte-identical across repeated runs",
       acceptance::criterion_reproducibility},
  };
  return all;
}

bool run_one(const Entry& entry) {
  acceptance::Checker checker;
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string error;
  try {
    ok = entry.fn(checker) && checker.ok();
  } catch (const std::exception& e) {
    error = e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s criterion %d: %s [%.1fs]\n", ok ? "PASS" : "FAIL", entry.number,
              entry.title.c_str(), seconds);
  if (!error.empty()) std::printf("    exception: %s\n", error.c_str());
  if (!checker.log().empty()) std::printf("%s", checker.log().c_str());
  std::fflush(stdout);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& entry : entries()) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), entry.number) == wanted.end()) {
      continue;
    }
    if (!run_one(entry)) ++failures;
  }
  return failures;
}
