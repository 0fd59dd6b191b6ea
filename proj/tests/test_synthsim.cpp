#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "iuq/errors.hpp"
#include "iuq/rng.hpp"
#include "iuq/synthsim.hpp"

using namespace iuq;
namespace fs = std::filesystem;

namespace {

synthsim::CaseSpec flat_spec() {
  auto suite = synthsim::make_benchmark_suite(1);
  synthsim::CaseSpec spec = suite.cases.front();
  spec.id = "flat";
  // Remove every ramp: all channels constant.
  spec.flow.end_level = spec.flow.start_level;
  return spec;
}

}  // namespace

TEST_CASE("constant boundary conditions give a constant output") {
  const auto spec = flat_spec();
  const auto grid = synthsim::simulate(Eigen::VectorXd::Ones(4), spec);
  for (Eigen::Index l = 0; l < 3; ++l) {
    for (Eigen::Index t = 1; t < grid.values.cols(); ++t) {
      CHECK(grid.values(l, t) == doctest::Approx(grid.values(l, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("simulation is deterministic bit for bit") {
  const auto suite = synthsim::make_benchmark_suite(3);
  Eigen::VectorXd theta(4);
  theta << 1.5, 0.8, 1.1, 1.2;
  const auto a = synthsim::simulate(theta, suite.cases[4]);
  const auto b = synthsim::simulate(theta, suite.cases[4]);
  CHECK(a.values == b.values);
}

TEST_CASE("every parameter has nonzero sensitivity in every case") {
  const auto suite = synthsim::make_benchmark_suite(5);
  const Eigen::VectorXd nominal = Eigen::VectorXd::Ones(4);
  const double h = 1e-4;
  for (const auto& spec : suite.cases) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      Eigen::VectorXd up = nominal, down = nominal;
      up(j) += h;
      down(j) -= h;
      const double delta = (synthsim::simulate_flat(up, spec) -
                            synthsim::simulate_flat(down, spec)).cwiseAbs().maxCoeff();
      CHECK(delta / (2.0 * h) > 1e-3);
    }
  }
}

TEST_CASE("output stays in [0,1] and respects the smoothness bound") {
  const auto suite = synthsim::make_benchmark_suite(7);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& spec = suite.cases[rng.uniform_int(9)];
    Eigen::VectorXd theta(4);
    for (Eigen::Index j = 0; j < 4; ++j) theta(j) = rng.uniform(0.05, 5.0);
    const auto grid = synthsim::simulate(theta, spec);
    CHECK(grid.values.minCoeff() >= 0.0);
    CHECK(grid.values.maxCoeff() <= 1.0);
    const double bound = synthsim::smoothness_bound(spec, theta);
    for (Eigen::Index l = 0; l < 3; ++l) {
      for (Eigen::Index t = 1; t < grid.values.cols(); ++t) {
        CHECK(std::abs(grid.values(l, t) - grid.values(l, t - 1)) <= bound);
      }
    }
  }
}

TEST_CASE("peak output is monotone in the gain multiplier") {
  const auto suite = synthsim::make_benchmark_suite(9);
  const auto& spec = suite.cases.front();
  double previous = -1.0;
  for (double gain : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    Eigen::VectorXd theta(4);
    theta << gain, 1.0, 1.0, 1.0;
    const double peak = synthsim::simulate(theta, spec).values.maxCoeff();
    CHECK(peak > previous);
    previous = peak;
  }
}

TEST_CASE("synthesize_observations noise laws") {
  const auto suite = synthsim::make_benchmark_suite(13);
  const auto& spec = suite.cases[2];
  Eigen::VectorXd theta(4);
  theta << 1.2, 0.9, 1.0, 1.3;

  SUBCASE("zero noise reproduces the simulation exactly") {
    const auto c = synthsim::synthesize_observations(spec, theta, synthsim::NoiseLaw::iid(0.0), 1);
    CHECK(c.measurements.values == synthsim::simulate(theta, spec).values);
    CHECK(c.flattened.size() == 120);
  }
  SUBCASE("fixed seed reproduces observations") {
    const auto a = synthsim::synthesize_observations(spec, theta,
                                                     synthsim::NoiseLaw::ar1(0.8, 0.02), 7);
    const auto b = synthsim::synthesize_observations(spec, theta,
                                                     synthsim::NoiseLaw::ar1(0.8, 0.02), 7);
    CHECK(a.flattened == b.flattened);
  }
  SUBCASE("AR(1) residuals have the requested lag-1 autocorrelation") {
    // Monte Carlo over replicates: mean lag-1 autocorrelation near rho. A
    // long series keeps the O(1/T) estimator bias inside the tolerance.
    synthsim::CaseSpec long_spec = spec;
    long_spec.steps = 200;
    const double rho = 0.8, sd = 0.05;
    const Eigen::MatrixXd truth = synthsim::simulate(theta, long_spec).values;
    double acc = 0.0;
    int count = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto c = synthsim::synthesize_observations(long_spec, theta,
                                                       synthsim::NoiseLaw::ar1(rho, sd), seed);
      const Eigen::MatrixXd resid = c.measurements.values - truth;
      for (Eigen::Index l = 0; l < 3; ++l) {
        const auto row = resid.row(l);
        const double mu = row.mean();
        double num = 0.0, den = 0.0;
        for (Eigen::Index t = 0; t + 1 < row.size(); ++t) {
          num += (row(t) - mu) * (row(t + 1) - mu);
        }
        for (Eigen::Index t = 0; t < row.size(); ++t) den += (row(t) - mu) * (row(t) - mu);
        acc += num / den;
        ++count;
      }
    }
    CHECK(std::abs(acc / count - rho) < 0.1);
  }
}

TEST_CASE("discrepancy bump is added to observations, not the model") {
  auto suite = synthsim::make_benchmark_suite(17);
  auto spec = suite.cases.front();
  spec.discrepancy = synthsim::Discrepancy{"tail_bump", 0.08};
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(4);

  const auto clean = synthsim::simulate(theta, spec);
  const auto observed = synthsim::synthesize_observations(spec, theta,
                                                          synthsim::NoiseLaw::iid(0.0), 1);
  const Eigen::MatrixXd delta = observed.measurements.values - clean.values;
  CHECK(delta.maxCoeff() == doctest::Approx(0.08).epsilon(0.01));
  // Localized in the tail: nothing added during the first half.
  CHECK(delta.leftCols(20).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("benchmark suite structure") {
  const auto suite = synthsim::make_benchmark_suite(21);
  CHECK(suite.cases.size() == 9);
  CHECK(suite.train_ids.size() == 5);
  CHECK(suite.test_ids.size() == 4);
  for (const auto& id : suite.train_ids) (void)suite.case_by_id(id);
  for (const auto& id : suite.test_ids) (void)suite.case_by_id(id);
  CHECK(suite.theta_star_groups.rows() == 9);

  const auto again = synthsim::make_benchmark_suite(21);
  CHECK(again.theta_star_groups == suite.theta_star_groups);
  const auto different = synthsim::make_benchmark_suite(22);
  CHECK(different.theta_star_groups != suite.theta_star_groups);

  CHECK_THROWS_AS((void)suite.case_by_id("Z-XX"), ValidationError);
}

TEST_CASE("transition window follows the ramped channel") {
  const auto suite = synthsim::make_benchmark_suite(23);
  for (const auto& spec : suite.cases) {
    const auto [start, end] = spec.transition_window();
    CHECK(start == 20.0);
    CHECK(end == 32.0);
  }
}

TEST_CASE("spec json round trip") {
  auto suite = synthsim::make_benchmark_suite(29);
  auto spec = suite.cases[5];
  spec.discrepancy = synthsim::Discrepancy{"mid_bump", 0.05};
  const fs::path path = fs::temp_directory_path() / "iuq_test_spec.json";
  spec.save_json(path);
  const auto restored = synthsim::CaseSpec::load_json(path);
  CHECK(restored.id == spec.id);
  CHECK(restored.steps == spec.steps);
  CHECK(restored.flow.end_level == spec.flow.end_level);
  CHECK(restored.location_gains == spec.location_gains);
  REQUIRE(restored.discrepancy.has_value());
  CHECK(restored.discrepancy->magnitude == 0.05);
  fs::remove(path);
}

TEST_CASE("spec validation rejects malformed cases") {
  auto suite = synthsim::make_benchmark_suite(31);
  auto spec = suite.cases.front();
  SUBCASE("too few steps") {
    spec.steps = 5;
    CHECK_THROWS_AS(synthsim::validate_spec(spec), ValidationError);
  }
  SUBCASE("nonpositive channel level") {
    spec.flow.end_level = 0.0;
    CHECK_THROWS_AS(synthsim::validate_spec(spec), ValidationError);
  }
  SUBCASE("bad theta") {
    Eigen::VectorXd theta(3);
    theta << 1, 1, 1;
    CHECK_THROWS_AS((void)synthsim::simulate(theta, spec), ValidationError);
  }
}

TEST_CASE("bc member simulator perturbs within the requested law") {
  const auto suite = synthsim::make_benchmark_suite(37);
  const auto& spec = suite.cases.front();
  synthsim::BcDistributions bc;
  bc.flow = {0.02, 0.0};
  const auto member = synthsim::make_bc_member_simulator(spec, bc, Eigen::VectorXd::Ones(4));

  SUBCASE("zero-variance law reproduces the nominal output") {
    synthsim::BcDistributions none;
    const auto exact = synthsim::make_bc_member_simulator(spec, none, Eigen::VectorXd::Ones(4));
    Rng rng(1);
    const auto out = exact(rng);
    REQUIRE(out.has_value());
    CHECK(*out == synthsim::simulate_flat(Eigen::VectorXd::Ones(4), spec));
  }
  SUBCASE("perturbed members differ from nominal and spread") {
    Rng r1(2), r2(3);
    const auto a = member(r1);
    const auto b = member(r2);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK((*a - *b).cwiseAbs().maxCoeff() > 0.0);
  }
}
