#include <doctest.h>

#include <vector>

#include "iuq/doe.hpp"
#include "iuq/errors.hpp"

using namespace iuq;

namespace {

// Brute-force audit: exactly one sample in each of n equal bins, per column.
bool stratified(const doe::DesignMatrix& design) {
  const auto n = design.points.rows();
  for (Eigen::Index j = 0; j < design.points.cols(); ++j) {
    const auto [low, high] = design.bounds[static_cast<std::size_t>(j)];
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (design.points(i, j) - low) / (high - low);
      if (u < 0.0 || u >= 1.0) return false;
      counts[static_cast<std::size_t>(u * n)] += 1;
    }
    for (int c : counts) {
      if (c != 1) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("single point lands inside the bounds") {
  const auto design = doe::lhs_sample(1, {{0.0, 5.0}}, 3);
  CHECK(design.points.rows() == 1);
  CHECK(design.points(0, 0) > 0.0);
  CHECK(design.points(0, 0) < 5.0);
}

TEST_CASE("400 x 4 design is stratified in every marginal") {
  const auto design = doe::lhs_sample(400, {{0, 5}, {0, 5}, {0, 5}, {0, 5}}, 42);
  CHECK(design.points.rows() == 400);
  CHECK(design.points.cols() == 4);
  CHECK(stratified(design));
}

TEST_CASE("exhaustive bin count for a small design") {
  const auto design = doe::lhs_sample(10, {{-2.0, 3.0}, {10.0, 20.0}}, 7);
  CHECK(stratified(design));
}

TEST_CASE("stratification holds across n, d, seeds") {
  for (std::uint64_t seed : {1ULL, 99ULL, 12345ULL}) {
    for (int n : {2, 17, 64}) {
      std::vector<std::pair<double, double>> bounds;
      for (int d = 0; d < 1 + static_cast<int>(seed % 4); ++d) bounds.push_back({-1.0, 1.0 + d});
      CHECK(stratified(doe::lhs_sample(n, bounds, seed)));
    }
  }
}

TEST_CASE("same seed reproduces the design bit for bit") {
  const auto a = doe::lhs_sample(50, {{0, 5}, {0, 5}}, 11);
  const auto b = doe::lhs_sample(50, {{0, 5}, {0, 5}}, 11);
  CHECK(a.points == b.points);
  const auto c = doe::lhs_sample(50, {{0, 5}, {0, 5}}, 12);
  CHECK(a.points != c.points);
}

TEST_CASE("invalid bounds are rejected") {
  CHECK_THROWS_AS((void)doe::lhs_sample(10, {{2.0, 2.0}}, 0), ValidationError);
  CHECK_THROWS_AS((void)doe::lhs_sample(10, {{3.0, 2.0}}, 0), ValidationError);
  CHECK_THROWS_AS((void)doe::lhs_sample(0, {{0.0, 1.0}}, 0), ValidationError);
  CHECK_THROWS_AS((void)doe::lhs_sample(10, {}, 0), ValidationError);
}
