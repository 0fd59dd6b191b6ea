#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace iuq::doe {

/// Latin hypercube design: every column is a permutation of N stratified bins
/// with exactly one point per bin.
struct DesignMatrix {
  Eigen::MatrixXd points;                          // N x d
  std::vector<std::pair<double, double>> bounds;   // per dimension (low, high)
  std::uint64_t seed = 0;
};

/// Plain LHS: random bin permutation per dimension, uniform jitter within
/// each bin. Deterministic given the seed.
DesignMatrix lhs_sample(int n, const std::vector<std::pair<double, double>>& bounds,
                        std::uint64_t seed);

}  // namespace iuq::doe
