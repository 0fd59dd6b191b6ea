#include "iuq/doe.hpp"

#include <cmath>
#include <numeric>

#include "iuq/errors.hpp"
#include "iuq/rng.hpp"

namespace iuq::doe {

DesignMatrix lhs_sample(int n, const std::vector<std::pair<double, double>>& bounds,
                        std::uint64_t seed) {
  if (n < 1) throw ValidationError("lhs_sample: n must be >= 1");
  if (bounds.empty()) throw ValidationError("lhs_sample: empty bounds");
  for (const auto& [low, high] : bounds) {
    if (!(low < high) || !std::isfinite(low) || !std::isfinite(high)) {
      throw ValidationError("lhs_sample: invalid bounds (low must be < high and finite)");
    }
  }

  const auto d = static_cast<Eigen::Index>(bounds.size());
  DesignMatrix design;
  design.bounds = bounds;
  design.seed = seed;
  design.points.resize(n, d);

  Rng rng(seed);
  std::vector<int> bins(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::iota(bins.begin(), bins.end(), 0);
    rng.shuffle(bins);
    const double low = bounds[static_cast<std::size_t>(j)].first;
    const double width = (bounds[static_cast<std::size_t>(j)].second - low) / n;
    for (int i = 0; i < n; ++i) {
      design.points(i, j) = low + (bins[static_cast<std::size_t>(i)] + rng.uniform()) * width;
    }
  }
  return design;
}

}  // namespace iuq::doe
