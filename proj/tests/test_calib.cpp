#include <doctest.h>

#include <cmath>

#include "iuq/calib.hpp"
#include "iuq/doe.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/optim.hpp"
#include "iuq/rng.hpp"
#include "iuq/synthsim.hpp"

using namespace iuq;

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

// Exactly linear two-output "surrogate": predict(theta) = (theta, theta).
surrogate::Surrogate linear_surrogate() {
  surrogate::Surrogate s;
  s.backend = surrogate::Backend::mlp;
  s.input_dim = 1;
  s.output_dim = 2;
  s.mlp_model.layer_sizes = {1, 2};
  s.mlp_model.weights = {Eigen::MatrixXd::Ones(2, 1)};
  s.mlp_model.intercepts = {Eigen::VectorXd::Zero(2)};
  return s;
}

TransientCase scalar_case(const std::string& id, double y1, double y2) {
  TimeSeriesGrid meas;
  meas.times = Eigen::Vector2d(0.0, 1.0);
  meas.locations = {"m"};
  meas.values.resize(1, 2);
  meas.values << y1, y2;
  TimeSeriesGrid bc;
  bc.times = meas.times;
  bc.locations = {"p"};
  bc.values = Eigen::MatrixXd::Constant(1, 2, 1.0);
  return make_case(id, bc, meas);
}

calib::PriorSpec scalar_priors() {
  calib::PriorSpec priors = calib::PriorSpec::uniform_box({"k"}, 0.0, 5.0);
  return priors;
}

}  // namespace

TEST_CASE("prior law log densities") {
  const auto u = calib::PriorLaw::uniform(0.0, 5.0);
  CHECK(u.logpdf(2.0) == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
  CHECK(u.logpdf(6.0) == -std::numeric_limits<double>::infinity());
  CHECK(u.logpdf(-0.1) == -std::numeric_limits<double>::infinity());

  const auto n = calib::PriorLaw::normal(1.0, 2.0);
  const double z = (3.0 - 1.0) / 2.0;
  CHECK(n.logpdf(3.0) ==
        doctest::Approx(-0.5 * kLog2Pi - std::log(2.0) - 0.5 * z * z).epsilon(1e-12));
}

TEST_CASE("single-level target decomposes into likelihood, prior, and jacobian") {
  const auto model = linear_surrogate();
  const auto observed = scalar_case("c1", 1.3, 1.6);
  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  options.fallback_sigma = 1.0;  // unit observation variance
  const auto priors = scalar_priors();
  const auto target = calib::build_single_level_target(model, observed, options, priors);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, rng.uniform(-4.0, 4.0));
    const double theta = target.transforms[0].to_constrained(z(0));
    const Eigen::Vector2d pred(theta, theta);
    const Eigen::Vector2d y(1.3, 1.6);
    const double loglik = -kLog2Pi - 0.5 * (y - pred).squaredNorm();
    const double expected = loglik + priors.laws[0].logpdf(theta) +
                            target.transforms[0].log_jacobian(z(0));
    CHECK(target.logp(z) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("diagonal-covariance likelihood equals the sum of univariate terms") {
  const auto model = linear_surrogate();
  auto observed = scalar_case("c1", 0.9, 1.1);
  // Attach a full covariance; diagonal mode must only keep its diagonal.
  Eigen::MatrixXd sigma(2, 2);
  sigma << 0.04, 0.01, 0.01, 0.09;
  observed.covariance = covest::regularize_cov(sigma, 0.0);

  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  const auto priors = scalar_priors();
  const auto target = calib::build_single_level_target(model, observed, options, priors);

  const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.3);
  const double theta = target.transforms[0].to_constrained(z(0));
  double expected = priors.laws[0].logpdf(theta) + target.transforms[0].log_jacobian(z(0));
  const double vars[2] = {0.04, 0.09};
  const double ys[2] = {0.9, 1.1};
  for (int i = 0; i < 2; ++i) {
    const double r = ys[i] - theta;
    expected += -0.5 * kLog2Pi - 0.5 * std::log(vars[i]) - 0.5 * r * r / vars[i];
  }
  CHECK(target.logp(z) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("full covariance mode requires a covariance model") {
  const auto model = linear_surrogate();
  const auto observed = scalar_case("c1", 0.9, 1.1);
  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::full;
  CHECK_THROWS_AS(
      (void)calib::build_single_level_target(model, observed, options, scalar_priors()),
      ValidationError);
}

TEST_CASE("single-level gradient matches finite differences") {
  const auto model = linear_surrogate();
  const auto observed = scalar_case("c1", 1.2, 0.8);
  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  options.fallback_sigma = 0.5;
  calib::PriorSpec priors;
  priors.names = {"k"};
  priors.laws = {calib::PriorLaw::normal(1.0, 0.7)};  // identity transform branch
  const auto target = calib::build_single_level_target(model, observed, options, priors);
  REQUIRE(target.has_gradient());

  Rng rng(7);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, rng.uniform(-2.0, 4.0));
    Eigen::VectorXd up = z, down = z;
    up(0) += h;
    down(0) -= h;
    const double fd = (target.logp(up) - target.logp(down)) / (2.0 * h);
    CHECK(target.grad_logp(z)(0) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("pooled target sums per-case likelihoods") {
  const auto model = linear_surrogate();
  const auto case_a = scalar_case("a", 1.0, 1.2);
  const auto case_b = scalar_case("b", 0.7, 0.9);
  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  options.fallback_sigma = 1.0;
  const auto priors = scalar_priors();

  const auto pooled =
      calib::build_pooled_target({&model, &model}, {&case_a, &case_b}, options, priors);
  const auto single_a = calib::build_single_level_target(model, case_a, options, priors);
  const auto single_b = calib::build_single_level_target(model, case_b, options, priors);

  const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.4);
  const double prior_part = priors.laws[0].logpdf(pooled.transforms[0].to_constrained(z(0))) +
                            pooled.transforms[0].log_jacobian(z(0));
  CHECK(pooled.logp(z) ==
        doctest::Approx(single_a.logp(z) + single_b.logp(z) - prior_part).epsilon(1e-10));
}

namespace {

struct HierFixture {
  surrogate::Surrogate model = linear_surrogate();
  std::vector<TransientCase> cases;
  std::vector<const surrogate::Surrogate*> model_ptrs;
  std::vector<const TransientCase*> case_ptrs;
  calib::TargetOptions options;
  calib::PriorSpec priors;

  explicit HierFixture(int groups, std::uint64_t seed = 3) {
    Rng rng(seed);
    for (int g = 0; g < groups; ++g) {
      const double theta = 2.0 + 0.4 * rng.normal();
      cases.push_back(scalar_case("g" + std::to_string(g), theta + 0.3 * rng.normal(),
                                  theta + 0.3 * rng.normal()));
    }
    for (int g = 0; g < groups; ++g) {
      model_ptrs.push_back(&model);
      case_ptrs.push_back(&cases[static_cast<std::size_t>(g)]);
    }
    options.cov_mode = covest::CovMode::diagonal;
    options.fallback_sigma = 0.3;
    priors = calib::PriorSpec::uniform_box({"k"}, 0.0, 5.0);
  }
};

}  // namespace

TEST_CASE("hierarchical target layout and bounded hyper draws") {
  HierFixture fix(3);
  const auto target =
      calib::build_hierarchical_target(fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors);
  CHECK(target.dim == 2 + 3);
  CHECK(target.names[0] == "mu_k");
  CHECK(target.names[1] == "sigma_k");
  CHECK(target.names[2] == "theta_g0_k");

  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::VectorXd z(5);
    for (Eigen::Index i = 0; i < 5; ++i) z(i) = rng.uniform(-5.0, 5.0);
    const Eigen::VectorXd x = target.to_constrained(z);
    CHECK(x(0) > 0.0);  // mu in (0,5)
    CHECK(x(0) < 5.0);
    CHECK(x(1) > 0.0);  // sigma in (0,1)
    CHECK(x(1) < 1.0);
    // Reported per-group values are actual theta = mu + sigma * eta.
    CHECK(x(2) == doctest::Approx(x(0) + x(1) * z(2)).epsilon(1e-12));
    // Round trip through the joint inverse.
    const Eigen::VectorXd back = target.to_unconstrained(x);
    CHECK((back - z).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("hierarchical logp is invariant under group permutation") {
  HierFixture fix(4);
  const auto target =
      calib::build_hierarchical_target(fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors);

  auto permuted_models = fix.model_ptrs;
  auto permuted_cases = fix.case_ptrs;
  std::swap(permuted_cases[0], permuted_cases[2]);
  std::swap(permuted_cases[1], permuted_cases[3]);
  const auto permuted =
      calib::build_hierarchical_target(permuted_models, permuted_cases, fix.options, fix.priors);

  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd z(target.dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform(-2.0, 2.0);
    // Permute the per-group coordinates the same way the cases were permuted.
    Eigen::VectorXd zp = z;
    std::swap(zp(2 + 0), zp(2 + 2));
    std::swap(zp(2 + 1), zp(2 + 3));
    CHECK(target.logp(z) == doctest::Approx(permuted.logp(zp)).epsilon(1e-12));
  }
}

TEST_CASE("non-centered and centered parameterizations agree") {
  HierFixture fix(3);
  const auto target =
      calib::build_hierarchical_target(fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors);

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd z(target.dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform(-2.5, 2.5);
    const Eigen::VectorXd x = target.to_constrained(z);

    calib::HierarchicalParams params;
    params.hyper_mean = x.head(1);
    params.hyper_sd = x.segment(1, 1);
    params.per_group.resize(3, 1);
    for (int g = 0; g < 3; ++g) params.per_group(g, 0) = x(2 + g);
    const double centered = calib::hierarchical_logp_centered(
        fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors, params);

    // Change of variables: non-centered density = centered + G log sigma;
    // the target additionally carries the hyper transform jacobians.
    const double jacobians = target.transforms[0].log_jacobian(z(0)) +
                             target.transforms[1].log_jacobian(z(1));
    const double expected = centered + 3.0 * std::log(params.hyper_sd(0)) + jacobians;
    CHECK(target.logp(z) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("hierarchical gradient matches finite differences") {
  HierFixture fix(3);
  const auto target =
      calib::build_hierarchical_target(fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors);
  REQUIRE(target.has_gradient());

  Rng rng(19);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd z(target.dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform(-2.0, 2.0);
    const Eigen::VectorXd grad = target.grad_logp(z);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      Eigen::VectorXd up = z, down = z;
      up(i) += h;
      down(i) -= h;
      const double fd = (target.logp(up) - target.logp(down)) / (2.0 * h);
      CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("exchangeable groups have statistically indistinguishable posteriors") {
  // Two groups with identical data: the per-group 95% intervals must overlap.
  surrogate::Surrogate model = linear_surrogate();
  const auto case_a = scalar_case("a", 1.9, 2.1);
  const auto case_b = scalar_case("b", 1.9, 2.1);
  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  options.fallback_sigma = 0.3;
  const auto priors = calib::PriorSpec::uniform_box({"k"}, 0.0, 5.0);
  const auto target =
      calib::build_hierarchical_target({&model, &model}, {&case_a, &case_b}, options, priors);
  const auto chains = sampler::nuts_sample(target, 2, 600, 800, 3);
  const Eigen::MatrixXd pooled = sampler::pooled_draws(chains);

  auto interval = [&pooled](Eigen::Index col) {
    std::vector<double> v(pooled.col(col).data(), pooled.col(col).data() + pooled.rows());
    return std::make_pair(quantile(v, 0.025), quantile(v, 0.975));
  };
  const auto [a_lo, a_hi] = interval(2);
  const auto [b_lo, b_hi] = interval(3);
  CHECK(a_lo < b_hi);
  CHECK(b_lo < a_hi);
  const double a_med = pooled.col(2).mean();
  CHECK(a_med > b_lo);
  CHECK(a_med < b_hi);
}

TEST_CASE("hierarchical posterior matches a quadrature oracle") {
  // Linear model, Gaussian noise: the per-group parameters marginalize
  // analytically, leaving a 2D (mu, sigma) posterior computable by
  // quadrature. y_g | mu, sigma ~ N(mu*1, s^2 I + sigma^2 11^T).
  const double s = 0.3;
  const double mu_true = 2.0, sd_true = 0.4;
  Rng rng(23);
  HierFixture fix(6, 23);
  (void)mu_true;
  (void)sd_true;

  const auto target =
      calib::build_hierarchical_target(fix.model_ptrs, fix.case_ptrs, fix.options, fix.priors);
  const auto chains = sampler::nuts_sample(target, 4, 800, 1000, 29);
  const auto summary = calib::summarize_hyper(chains, {"k"});

  // Quadrature oracle on the marginalized density.
  auto group_loglik = [&](double mu, double sigma) {
    double total = 0.0;
    for (const auto& c : fix.cases) {
      const double y1 = c.flattened(0), y2 = c.flattened(1);
      const double v = s * s + sigma * sigma;
      const double cov = sigma * sigma;
      const double det = v * v - cov * cov;
      const double r1 = y1 - mu, r2 = y2 - mu;
      const double quad = (v * r1 * r1 - 2.0 * cov * r1 * r2 + v * r2 * r2) / det;
      total += -kLog2Pi - 0.5 * std::log(det) - 0.5 * quad;
    }
    return total;
  };
  const int nmu = 400, nsd = 300;
  double z_total = 0.0, mu_acc = 0.0, sd_acc = 0.0;
  double max_lp = -1e300;
  std::vector<double> lp(static_cast<std::size_t>(nmu) * nsd);
  for (int i = 0; i < nmu; ++i) {
    const double mu = 5.0 * (i + 0.5) / nmu;
    for (int j = 0; j < nsd; ++j) {
      const double sigma = 1.0 * (j + 0.5) / nsd;
      const double value = group_loglik(mu, sigma);
      lp[static_cast<std::size_t>(i) * nsd + j] = value;
      max_lp = std::max(max_lp, value);
    }
  }
  for (int i = 0; i < nmu; ++i) {
    const double mu = 5.0 * (i + 0.5) / nmu;
    for (int j = 0; j < nsd; ++j) {
      const double sigma = 1.0 * (j + 0.5) / nsd;
      const double w = std::exp(lp[static_cast<std::size_t>(i) * nsd + j] - max_lp);
      z_total += w;
      mu_acc += w * mu;
      sd_acc += w * sigma;
    }
  }
  const double mu_oracle = mu_acc / z_total;
  const double sd_oracle = sd_acc / z_total;

  const Eigen::VectorXd mcse = sampler::mcse_mean(chains);
  CHECK(std::abs(summary.predictive_mean(0) - mu_oracle) < 3.0 * mcse(0) + 0.01);
  CHECK(std::abs(summary.predictive_sd(0) - sd_oracle) < 3.0 * mcse(1) + 0.01);
}

TEST_CASE("summarize_hyper mechanics") {
  auto make_constant_chain = [](int index) {
    sampler::PosteriorChain c;
    c.names = {"mu_k", "sigma_k", "theta_g_k"};
    c.chain_index = index;
    c.draws.resize(50, 3);
    c.draws.col(0).setConstant(2.0);
    c.draws.col(1).setConstant(0.5);
    c.draws.col(2).setConstant(2.1);
    return c;
  };
  const std::vector<sampler::PosteriorChain> degenerate = {make_constant_chain(0),
                                                           make_constant_chain(1)};
  // Degenerate chains fail diagnostics unless overridden.
  CHECK_THROWS_AS((void)calib::summarize_hyper(degenerate, {"k"}), NumericError);
  const auto summary = calib::summarize_hyper(degenerate, {"k"}, true);
  CHECK(summary.predictive_mean(0) == doctest::Approx(2.0));
  CHECK(summary.predictive_sd(0) == doctest::Approx(0.5));

  // Concatenation order does not matter.
  const std::vector<sampler::PosteriorChain> swapped = {make_constant_chain(1),
                                                        make_constant_chain(0)};
  const auto summary2 = calib::summarize_hyper(swapped, {"k"}, true);
  CHECK(summary2.predictive_mean(0) == summary.predictive_mean(0));
  CHECK(summary2.predictive_sd(0) == summary.predictive_sd(0));

  CHECK_THROWS_AS((void)calib::summarize_hyper(degenerate, {"missing"}, true), ValidationError);
}

TEST_CASE("validate_posterior error distributions") {
  const auto suite = synthsim::make_benchmark_suite(31);
  const auto& spec = suite.cases.front();
  Eigen::VectorXd truth(4);
  truth << 1.4, 1.0, 0.9, 1.2;
  const double noise = 0.01;
  const auto observed =
      synthsim::synthesize_observations(spec, truth, synthsim::NoiseLaw::iid(noise), 3);

  calib::ValidationCase vc;
  vc.observed = &observed;
  vc.predict = [&spec](const Eigen::VectorXd& theta) {
    return synthsim::simulate_flat(theta, spec);
  };
  vc.is_test = false;

  SUBCASE("true parameters leave only noise") {
    const auto report =
        calib::validate_posterior(calib::ThetaSource::from_point(truth), {vc}, 1, 7);
    const auto* row = report.find(spec.id, "posterior");
    REQUIRE(row != nullptr);
    CHECK(std::abs(row->mean) < 3.0 * noise / std::sqrt(120.0));
    CHECK(row->sd == doctest::Approx(noise).epsilon(0.25));
    // Prior reference (theta = 1) is much worse.
    const auto* prior_row = report.find(spec.id, "prior");
    REQUIRE(prior_row != nullptr);
    CHECK(prior_row->mae > 5.0 * row->mae);
  }
  SUBCASE("train-only report when there is no test split") {
    const auto report =
        calib::validate_posterior(calib::ThetaSource::from_point(truth), {vc}, 1, 7);
    for (const auto& row : report.rows) CHECK(row.split == "train");
  }
  SUBCASE("predictive-normal source draws parameters") {
    const auto source = calib::ThetaSource::from_predictive(truth,
                                                            Eigen::VectorXd::Constant(4, 0.05));
    const auto report = calib::validate_posterior(source, {vc}, 50, 11);
    const auto* row = report.find(spec.id, "posterior");
    REQUIRE(row != nullptr);
    CHECK(row->samples == 50 * 120);
    // Parameter scatter inflates the error spread beyond the noise floor.
    CHECK(row->sd > noise);
  }
}

TEST_CASE("iterative resampling terminates and flags active bounds") {
  const auto suite = synthsim::make_benchmark_suite(37);
  const auto& spec = suite.cases.front();
  const surrogate::SimulatorFn simulate = [&spec](const Eigen::VectorXd& theta) {
    return synthsim::simulate_flat(theta, spec);
  };
  Eigen::VectorXd truth(4);
  truth << 1.5, 1.0, 1.0, 1.2;
  const auto observed =
      synthsim::synthesize_observations(spec, truth, synthsim::NoiseLaw::iid(0.01), 5);

  calib::ResampleConfig config;
  config.design_size = 150;
  config.mlp.train.max_epochs = 400;
  config.mlp.train.learning_rate = 2e-3;
  config.chains = 2;
  config.warmup = 300;
  config.draws = 300;
  config.seed = 11;
  config.target.cov_mode = covest::CovMode::diagonal;
  config.target.fallback_sigma = 0.01;

  SUBCASE("interior posterior keeps the original bounds") {
    config.max_rounds = 2;
    const auto result = calib::iterative_resample(
        simulate, observed, calib::PriorSpec::uniform_box(synthsim::parameter_names(), 0.0, 5.0),
        config);
    CHECK(result.history.size() == 1);  // terminated after round one
    CHECK_FALSE(result.bounds_still_active);
    for (const auto& [low, high] : result.bounds) {
      CHECK(low == 0.0);
      CHECK(high == 5.0);
    }
  }
  SUBCASE("max_rounds = 0 returns the first posterior with a warning") {
    // Bounds rigged so the truth (gain 1.5) sits outside.
    config.max_rounds = 0;
    const auto result = calib::iterative_resample(
        simulate, observed, calib::PriorSpec::uniform_box(synthsim::parameter_names(), 0.0, 1.0),
        config);
    CHECK(result.history.size() == 1);
    CHECK(result.bounds_still_active);
    CHECK(result.bounds[0].second == 1.0);  // never extended
  }
}

TEST_CASE("posterior mode recovers the generating parameters") {
  const auto suite = synthsim::make_benchmark_suite(41);
  const auto& spec = suite.cases.front();
  Eigen::VectorXd truth(4);
  truth << 1.6, 1.2, 0.7, 1.4;
  const auto observed =
      synthsim::synthesize_observations(spec, truth, synthsim::NoiseLaw::iid(0.0), 1);

  // Train a surrogate, then find the posterior mode by simplex search.
  const auto design = doe::lhs_sample(400, {{0, 5}, {0, 5}, {0, 5}, {0, 5}}, 13);
  const TrainingSet training = surrogate::run_design(
      [&spec](const Eigen::VectorXd& theta) { return synthsim::simulate_flat(theta, spec); },
      design.points, spec.id);
  surrogate::MlpConfig mlp_config;
  mlp_config.train.max_epochs = 800;
  mlp_config.train.learning_rate = 2e-3;
  mlp_config.train.seed = 3;
  TrainingSet no_val;
  const auto model = surrogate::train_mlp(training, no_val, mlp_config);

  calib::TargetOptions options;
  options.cov_mode = covest::CovMode::diagonal;
  options.fallback_sigma = 0.01;
  const auto target = calib::build_single_level_target(
      model, observed, options,
      calib::PriorSpec::uniform_box(synthsim::parameter_names(), 0.0, 5.0));

  const Eigen::VectorXd z0 = target.to_unconstrained(Eigen::VectorXd::Ones(4));
  const auto result = nelder_mead([&target](const Eigen::VectorXd& z) { return -target.logp(z); },
                                  z0, 0.5, 2000, 1e-12);
  const Eigen::VectorXd mode = target.to_constrained(result.x);
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(std::abs(mode(j) - truth(j)) < 0.05);
  }
}
