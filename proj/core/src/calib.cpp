#include "iuq/calib.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "iuq/doe.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::calib {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.83787706640934548356;

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

sampler::VarTransform transform_for(const PriorLaw& law) {
  if (law.kind == PriorLaw::Kind::uniform) {
    return sampler::VarTransform::log_odds(law.a, law.b);
  }
  return sampler::VarTransform::identity();
}

// d(log prior)/d(theta); uniform inside its support contributes nothing.
double d_log_prior(const PriorLaw& law, double x) {
  if (law.kind == PriorLaw::Kind::uniform) return 0.0;
  return -(x - law.a) / (law.b * law.b);
}

covest::CovarianceModel resolve_covariance(const TransientCase& observed,
                                           const TargetOptions& options) {
  if (observed.covariance.has_value()) {
    if (options.cov_mode == covest::CovMode::diagonal) {
      return observed.covariance->diagonalized();
    }
    return *observed.covariance;
  }
  if (options.cov_mode == covest::CovMode::full) {
    throw ValidationError("calib: case '" + observed.id +
                          "' has no covariance model but cov_mode is full");
  }
  const Eigen::Index k = observed.flattened.size();
  return covest::regularize_cov(Eigen::MatrixXd::Zero(k, k),
                                options.fallback_sigma * options.fallback_sigma,
                                covest::CovMode::diagonal, observed.id);
}

struct Group {
  const surrogate::Surrogate* model;
  const TransientCase* observed;
  covest::CovarianceModel cov;
};

std::vector<Group> make_groups(const std::vector<const surrogate::Surrogate*>& models,
                               const std::vector<const TransientCase*>& cases,
                               const TargetOptions& options, Eigen::Index dim) {
  if (models.size() != cases.size() || models.empty()) {
    throw ValidationError("calib: need matching, nonempty surrogate and case lists");
  }
  std::vector<Group> groups;
  for (std::size_t g = 0; g < models.size(); ++g) {
    if (models[g] == nullptr || cases[g] == nullptr) {
      throw ValidationError("calib: null surrogate or case");
    }
    if (models[g]->input_dim != dim) {
      throw ValidationError("calib: surrogate input dimension != parameter dimension");
    }
    if (models[g]->output_dim != cases[g]->flattened.size()) {
      throw ValidationError("calib: surrogate output dimension != case '" + cases[g]->id +
                            "' flattened length");
    }
    groups.push_back({models[g], cases[g], resolve_covariance(*cases[g], options)});
  }
  return groups;
}

// Log likelihood of one group; emulator covariance (when requested) is added
// per evaluation, which forces a fresh factorization.
double group_loglik(const Group& g, const Eigen::VectorXd& theta, bool include_emulator_cov) {
  if (!include_emulator_cov) {
    return covest::mvn_logpdf(g.observed->flattened, surrogate::predict(*g.model, theta), g.cov);
  }
  auto [mean, emu_cov] = surrogate::predict_with_variance(*g.model, theta);
  Eigen::MatrixXd total = g.cov.matrix + emu_cov;
  total = 0.5 * (total + total.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(total);
  if (llt.info() != Eigen::Success) {
    total.diagonal().array() += 1e-10 * total.trace() / static_cast<double>(total.rows());
    llt.compute(total);
    if (llt.info() != Eigen::Success) return -kInf;
  }
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::VectorXd half =
      l.triangularView<Eigen::Lower>().solve(g.observed->flattened - mean);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double k = static_cast<double>(mean.size());
  return -0.5 * k * kLog2Pi - 0.5 * log_det - 0.5 * half.squaredNorm();
}

// Gradient of the group log likelihood w.r.t. theta: J^T Sigma^{-1} residual.
Eigen::VectorXd group_loglik_grad(const Group& g, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd residual =
      g.observed->flattened - surrogate::predict(*g.model, theta);
  return surrogate::vjp_predict(*g.model, theta, covest::cov_solve(g.cov, residual));
}

}  // namespace

double PriorLaw::logpdf(double x) const {
  if (kind == Kind::uniform) {
    if (x < a || x > b) return -kInf;
    return -std::log(b - a);
  }
  return log_normal_pdf(x, a, b);
}

PriorSpec PriorSpec::uniform_box(const std::vector<std::string>& names, double low, double high) {
  PriorSpec p;
  p.names = names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    p.laws.push_back(PriorLaw::uniform(low, high));
    p.hyper_mean_laws.push_back(PriorLaw::uniform(low, high));
    p.hyper_sd_laws.push_back(PriorLaw::uniform(0.0, 1.0));
  }
  return p;
}

void PriorSpec::validate() const {
  if (names.empty()) throw ValidationError("priors: empty parameter list");
  if (laws.size() != names.size()) throw ValidationError("priors: laws size != names size");
  auto check_law = [](const PriorLaw& law, const std::string& what) {
    if (law.kind == PriorLaw::Kind::uniform && !(law.a < law.b)) {
      throw ValidationError("priors: " + what + ": uniform needs low < high");
    }
    if (law.kind == PriorLaw::Kind::normal && !(law.b > 0.0)) {
      throw ValidationError("priors: " + what + ": normal needs positive sd");
    }
  };
  for (std::size_t i = 0; i < laws.size(); ++i) check_law(laws[i], names[i]);
  if (!hyper_mean_laws.empty() && hyper_mean_laws.size() != names.size()) {
    throw ValidationError("priors: hyper_mean_laws size != names size");
  }
  if (!hyper_sd_laws.empty() && hyper_sd_laws.size() != names.size()) {
    throw ValidationError("priors: hyper_sd_laws size != names size");
  }
  for (std::size_t i = 0; i < hyper_mean_laws.size(); ++i) {
    check_law(hyper_mean_laws[i], "hyper mean " + names[i]);
  }
  for (std::size_t i = 0; i < hyper_sd_laws.size(); ++i) {
    check_law(hyper_sd_laws[i], "hyper sd " + names[i]);
    if (hyper_sd_laws[i].kind == PriorLaw::Kind::uniform && hyper_sd_laws[i].a < 0.0) {
      throw ValidationError("priors: hyper sd support must be within (0, inf)");
    }
    if (hyper_sd_laws[i].kind == PriorLaw::Kind::normal) {
      throw ValidationError("priors: hyper sd law must have positive support (use uniform)");
    }
  }
}

sampler::TargetDensity build_pooled_target(const std::vector<const surrogate::Surrogate*>& models,
                                           const std::vector<const TransientCase*>& cases,
                                           const TargetOptions& options, const PriorSpec& priors) {
  priors.validate();
  const Eigen::Index d = priors.dim();
  auto groups = std::make_shared<std::vector<Group>>(make_groups(models, cases, options, d));

  sampler::TargetDensity target;
  target.dim = d;
  target.names = priors.names;
  for (const auto& law : priors.laws) target.transforms.push_back(transform_for(law));

  const auto transforms = target.transforms;
  const auto laws = priors.laws;
  const bool emulator_cov = options.include_emulator_cov;

  target.logp = [groups, transforms, laws, d, emulator_cov](const Eigen::VectorXd& z) {
    double lp = 0.0;
    Eigen::VectorXd theta(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      theta(j) = transforms[static_cast<std::size_t>(j)].to_constrained(z(j));
      lp += laws[static_cast<std::size_t>(j)].logpdf(theta(j)) +
            transforms[static_cast<std::size_t>(j)].log_jacobian(z(j));
    }
    if (!std::isfinite(lp)) return -kInf;
    for (const auto& g : *groups) lp += group_loglik(g, theta, emulator_cov);
    return lp;
  };

  const bool gradient_ok =
      !emulator_cov && std::all_of(groups->begin(), groups->end(), [](const Group& g) {
        return g.model->backend == surrogate::Backend::mlp;
      });
  if (gradient_ok) {
    target.grad_logp = [groups, transforms, laws, d](const Eigen::VectorXd& z) {
      Eigen::VectorXd theta(d), dtheta_dz(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        theta(j) = transforms[static_cast<std::size_t>(j)].to_constrained(z(j));
        dtheta_dz(j) = std::exp(transforms[static_cast<std::size_t>(j)].log_jacobian(z(j)));
      }
      Eigen::VectorXd grad_theta = Eigen::VectorXd::Zero(d);
      for (const auto& g : *groups) grad_theta += group_loglik_grad(g, theta);
      Eigen::VectorXd grad(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto& law = laws[static_cast<std::size_t>(j)];
        const auto& tr = transforms[static_cast<std::size_t>(j)];
        grad(j) = (grad_theta(j) + d_log_prior(law, theta(j))) * dtheta_dz(j) +
                  tr.d_log_jacobian(z(j));
      }
      return grad;
    };
  }
  return target;
}

sampler::TargetDensity build_single_level_target(const surrogate::Surrogate& model,
                                                 const TransientCase& observed,
                                                 const TargetOptions& options,
                                                 const PriorSpec& priors) {
  return build_pooled_target({&model}, {&observed}, options, priors);
}

sampler::TargetDensity build_hierarchical_target(
    const std::vector<const surrogate::Surrogate*>& models,
    const std::vector<const TransientCase*>& cases, const TargetOptions& options,
    const PriorSpec& priors) {
  priors.validate();
  if (priors.hyper_mean_laws.empty() || priors.hyper_sd_laws.empty()) {
    throw ValidationError("calib: hierarchical mode needs hyperprior laws");
  }
  if (models.size() < 2) throw ValidationError("calib: hierarchical mode needs >= 2 groups");
  const Eigen::Index d = priors.dim();
  auto groups = std::make_shared<std::vector<Group>>(make_groups(models, cases, options, d));
  const auto big_g = static_cast<Eigen::Index>(groups->size());

  sampler::TargetDensity target;
  target.dim = 2 * d + big_g * d;
  for (const auto& n : priors.names) target.names.push_back("mu_" + n);
  for (const auto& n : priors.names) target.names.push_back("sigma_" + n);
  for (const auto& g : *groups) {
    for (const auto& n : priors.names) target.names.push_back("theta_" + g.observed->id + "_" + n);
  }
  std::vector<sampler::VarTransform> mu_tr, sd_tr;
  for (const auto& law : priors.hyper_mean_laws) mu_tr.push_back(transform_for(law));
  for (const auto& law : priors.hyper_sd_laws) sd_tr.push_back(transform_for(law));
  target.transforms = mu_tr;
  target.transforms.insert(target.transforms.end(), sd_tr.begin(), sd_tr.end());
  for (Eigen::Index i = 0; i < big_g * d; ++i) {
    target.transforms.push_back(sampler::VarTransform::identity());
  }

  const auto mean_laws = priors.hyper_mean_laws;
  const auto sd_laws = priors.hyper_sd_laws;
  const bool emulator_cov = options.include_emulator_cov;

  struct Decoded {
    Eigen::VectorXd mu, sigma;
    Eigen::MatrixXd eta, theta;  // G x d
  };
  auto decode = [mu_tr, sd_tr, d, big_g](const Eigen::VectorXd& z) {
    Decoded out;
    out.mu.resize(d);
    out.sigma.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      out.mu(j) = mu_tr[static_cast<std::size_t>(j)].to_constrained(z(j));
      out.sigma(j) = sd_tr[static_cast<std::size_t>(j)].to_constrained(z(d + j));
    }
    out.eta.resize(big_g, d);
    out.theta.resize(big_g, d);
    for (Eigen::Index g = 0; g < big_g; ++g) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out.eta(g, j) = z(2 * d + g * d + j);
        out.theta(g, j) = out.mu(j) + out.sigma(j) * out.eta(g, j);
      }
    }
    return out;
  };

  target.constrain_override = [decode, d, big_g](const Eigen::VectorXd& z) {
    const Decoded dec = decode(z);
    Eigen::VectorXd x(2 * d + big_g * d);
    x.head(d) = dec.mu;
    x.segment(d, d) = dec.sigma;
    for (Eigen::Index g = 0; g < big_g; ++g) x.segment(2 * d + g * d, d) = dec.theta.row(g);
    return x;
  };
  target.unconstrain_override = [mu_tr, sd_tr, d, big_g](const Eigen::VectorXd& x) {
    Eigen::VectorXd z(2 * d + big_g * d);
    for (Eigen::Index j = 0; j < d; ++j) {
      z(j) = mu_tr[static_cast<std::size_t>(j)].to_unconstrained(x(j));
      z(d + j) = sd_tr[static_cast<std::size_t>(j)].to_unconstrained(x(d + j));
    }
    for (Eigen::Index g = 0; g < big_g; ++g) {
      for (Eigen::Index j = 0; j < d; ++j) {
        z(2 * d + g * d + j) = (x(2 * d + g * d + j) - x(j)) / x(d + j);
      }
    }
    return z;
  };

  target.logp = [groups, decode, mu_tr, sd_tr, mean_laws, sd_laws, d, big_g,
                 emulator_cov](const Eigen::VectorXd& z) {
    const Decoded dec = decode(z);
    double lp = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      lp += mean_laws[static_cast<std::size_t>(j)].logpdf(dec.mu(j)) +
            mu_tr[static_cast<std::size_t>(j)].log_jacobian(z(j));
      lp += sd_laws[static_cast<std::size_t>(j)].logpdf(dec.sigma(j)) +
            sd_tr[static_cast<std::size_t>(j)].log_jacobian(z(d + j));
    }
    if (!std::isfinite(lp)) return -kInf;
    lp += -0.5 * dec.eta.squaredNorm() -
          0.5 * kLog2Pi * static_cast<double>(dec.eta.size());
    for (Eigen::Index g = 0; g < big_g; ++g) {
      lp += group_loglik((*groups)[static_cast<std::size_t>(g)], dec.theta.row(g).transpose(),
                         emulator_cov);
    }
    return lp;
  };

  const bool gradient_ok =
      !emulator_cov && std::all_of(groups->begin(), groups->end(), [](const Group& g) {
        return g.model->backend == surrogate::Backend::mlp;
      });
  if (gradient_ok) {
    target.grad_logp = [groups, decode, mu_tr, sd_tr, mean_laws, sd_laws, d,
                        big_g](const Eigen::VectorXd& z) {
      const Decoded dec = decode(z);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
      Eigen::VectorXd mu_acc = Eigen::VectorXd::Zero(d);
      Eigen::VectorXd sigma_acc = Eigen::VectorXd::Zero(d);
      for (Eigen::Index g = 0; g < big_g; ++g) {
        const Eigen::VectorXd gt = group_loglik_grad((*groups)[static_cast<std::size_t>(g)],
                                                     dec.theta.row(g).transpose());
        mu_acc += gt;
        sigma_acc += (gt.array() * dec.eta.row(g).transpose().array()).matrix();
        // eta: chain through theta = mu + sigma * eta, plus the N(0,1) prior.
        grad.segment(2 * d + g * d, d) =
            (gt.array() * dec.sigma.array()).matrix() - dec.eta.row(g).transpose();
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        const double dmu_dz = std::exp(mu_tr[static_cast<std::size_t>(j)].log_jacobian(z(j)));
        grad(j) = (mu_acc(j) + d_log_prior(mean_laws[static_cast<std::size_t>(j)], dec.mu(j))) *
                      dmu_dz +
                  mu_tr[static_cast<std::size_t>(j)].d_log_jacobian(z(j));
        const double dsd_dz =
            std::exp(sd_tr[static_cast<std::size_t>(j)].log_jacobian(z(d + j)));
        grad(d + j) =
            (sigma_acc(j) + d_log_prior(sd_laws[static_cast<std::size_t>(j)], dec.sigma(j))) *
                dsd_dz +
            sd_tr[static_cast<std::size_t>(j)].d_log_jacobian(z(d + j));
      }
      return grad;
    };
  }
  return target;
}

double hierarchical_logp_centered(const std::vector<const surrogate::Surrogate*>& models,
                                  const std::vector<const TransientCase*>& cases,
                                  const TargetOptions& options, const PriorSpec& priors,
                                  const HierarchicalParams& params) {
  priors.validate();
  const Eigen::Index d = priors.dim();
  const auto groups = make_groups(models, cases, options, d);
  if (params.per_group.rows() != static_cast<Eigen::Index>(groups.size()) ||
      params.per_group.cols() != d || params.hyper_mean.size() != d ||
      params.hyper_sd.size() != d) {
    throw ValidationError("calib: hierarchical parameter shape mismatch");
  }
  if ((params.hyper_sd.array() <= 0.0).any()) return -kInf;

  double lp = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    lp += priors.hyper_mean_laws[static_cast<std::size_t>(j)].logpdf(params.hyper_mean(j));
    lp += priors.hyper_sd_laws[static_cast<std::size_t>(j)].logpdf(params.hyper_sd(j));
  }
  if (!std::isfinite(lp)) return -kInf;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Eigen::Index j = 0; j < d; ++j) {
      lp += log_normal_pdf(params.per_group(static_cast<Eigen::Index>(g), j),
                           params.hyper_mean(j), params.hyper_sd(j));
    }
    lp += group_loglik(groups[g], params.per_group.row(static_cast<Eigen::Index>(g)).transpose(),
                       options.include_emulator_cov);
  }
  return lp;
}

HyperSummary summarize_hyper(const std::vector<sampler::PosteriorChain>& chains,
                             const std::vector<std::string>& parameter_names,
                             bool override_diagnostics) {
  if (chains.empty()) throw ValidationError("summarize_hyper: no chains");
  const auto& names = chains.front().names;
  auto column_of = [&names](const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    }
    throw ValidationError("summarize_hyper: missing column '" + name + "'");
  };

  const Eigen::MatrixXd pooled = sampler::pooled_draws(chains);

  HyperSummary summary;
  Eigen::VectorXd rhat_values;
  if (chains.size() >= 2 && chains.front().draws.rows() >= 4) {
    rhat_values = sampler::rhat(chains);
  }

  summary.predictive_mean.resize(static_cast<Eigen::Index>(parameter_names.size()));
  summary.predictive_sd.resize(static_cast<Eigen::Index>(parameter_names.size()));
  for (std::size_t p = 0; p < parameter_names.size(); ++p) {
    const Eigen::Index mu_col = column_of("mu_" + parameter_names[p]);
    const Eigen::Index sd_col = column_of("sigma_" + parameter_names[p]);
    HyperParameterSummary s;
    s.name = parameter_names[p];
    std::vector<double> mu_draws(pooled.col(mu_col).data(),
                                 pooled.col(mu_col).data() + pooled.rows());
    std::vector<double> sd_draws(pooled.col(sd_col).data(),
                                 pooled.col(sd_col).data() + pooled.rows());
    s.mu_mean = mean(mu_draws);
    s.mu_q025 = quantile(mu_draws, 0.025);
    s.mu_q975 = quantile(mu_draws, 0.975);
    s.sigma_mean = mean(sd_draws);
    s.sigma_q025 = quantile(sd_draws, 0.025);
    s.sigma_q975 = quantile(sd_draws, 0.975);
    summary.parameters.push_back(s);
    summary.predictive_mean(static_cast<Eigen::Index>(p)) = s.mu_mean;
    summary.predictive_sd(static_cast<Eigen::Index>(p)) = s.sigma_mean;
    if (rhat_values.size() > 0) {
      for (const Eigen::Index col : {mu_col, sd_col}) {
        const double r = rhat_values(col);
        // NaN marks a degenerate (constant) chain; propagate as failure.
        summary.max_rhat = std::isnan(r) ? std::numeric_limits<double>::quiet_NaN()
                                         : std::max(summary.max_rhat, r);
        if (std::isnan(summary.max_rhat)) break;
      }
    }
  }

  if (!override_diagnostics) {
    if (rhat_values.size() == 0) {
      throw NumericError(
          "summarize_hyper: convergence diagnostics unavailable (need >= 2 chains); "
          "pass override to proceed");
    }
    if (!(summary.max_rhat < 1.05)) {
      throw NumericError("summarize_hyper: split R-hat " + format_double(summary.max_rhat) +
                         " >= 1.05 (or degenerate); pass override to proceed");
    }
  }
  return summary;
}

ResampleResult iterative_resample(const surrogate::SimulatorFn& simulate,
                                  const TransientCase& observed, const PriorSpec& priors,
                                  const ResampleConfig& config) {
  priors.validate();
  const Eigen::Index d = priors.dim();
  std::vector<std::pair<double, double>> bounds;
  for (const auto& law : priors.laws) {
    if (law.kind != PriorLaw::Kind::uniform) {
      throw ValidationError("iterative_resample: range extension needs uniform priors");
    }
    bounds.emplace_back(law.a, law.b);
  }

  ResampleResult result;
  for (int round = 0;; ++round) {
    const auto design =
        doe::lhs_sample(config.design_size, bounds, config.seed + 31ULL * round);
    TrainingSet training = surrogate::run_design(simulate, design.points, observed.id);
    TrainingSet no_val;
    const surrogate::Surrogate model = surrogate::train_mlp(training, no_val, config.mlp);

    PriorSpec round_priors = priors;
    for (Eigen::Index j = 0; j < d; ++j) {
      round_priors.laws[static_cast<std::size_t>(j)] =
          PriorLaw::uniform(bounds[static_cast<std::size_t>(j)].first,
                            bounds[static_cast<std::size_t>(j)].second);
    }
    const auto target = build_single_level_target(model, observed, config.target, round_priors);
    result.chains = sampler::nuts_sample(target, config.chains, config.warmup, config.draws,
                                         config.seed + 977ULL * round);

    const Eigen::MatrixXd pooled = sampler::pooled_draws(result.chains);
    ResampleRound record;
    record.bounds = bounds;
    record.upper_mass.resize(d);
    record.lower_mass.resize(d);
    bool extended = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      auto& [low, high] = bounds[static_cast<std::size_t>(j)];
      const double margin = 0.05 * (high - low);
      record.upper_mass(j) =
          (pooled.col(j).array() > high - margin).cast<double>().mean();
      record.lower_mass(j) =
          (pooled.col(j).array() < low + margin).cast<double>().mean();
      if (round < config.max_rounds) {
        const double extension = 0.5 * (high - low);
        if (record.upper_mass(j) > config.mass_threshold) {
          high += extension;
          extended = true;
        }
        if (record.lower_mass(j) > config.mass_threshold) {
          low -= extension;
          extended = true;
        }
      }
    }
    result.history.push_back(record);

    if (!extended) {
      result.bounds_still_active =
          (record.upper_mass.array() > config.mass_threshold).any() ||
          (record.lower_mass.array() > config.mass_threshold).any();
      result.bounds = bounds;
      return result;
    }
  }
}

ThetaSource ThetaSource::from_point(Eigen::VectorXd theta) {
  ThetaSource s;
  s.kind = Kind::point;
  s.point = std::move(theta);
  return s;
}

ThetaSource ThetaSource::from_predictive(Eigen::VectorXd mean, Eigen::VectorXd sd) {
  if (mean.size() != sd.size() || (sd.array() < 0.0).any()) {
    throw ValidationError("theta source: predictive mean/sd mismatch");
  }
  ThetaSource s;
  s.kind = Kind::predictive_normal;
  s.predictive_mean = std::move(mean);
  s.predictive_sd = std::move(sd);
  return s;
}

ThetaSource ThetaSource::from_draws(Eigen::MatrixXd draws) {
  if (draws.rows() == 0) throw ValidationError("theta source: empty draws");
  ThetaSource s;
  s.kind = Kind::chains;
  s.draws = std::move(draws);
  return s;
}

namespace {

ErrorStats stats_from_errors(std::vector<double> errors) {
  ErrorStats s;
  s.samples = static_cast<int>(errors.size());
  s.mean = mean(errors);
  s.sd = sample_sd(errors);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double e : errors) {
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  s.mae = abs_sum / errors.size();
  s.rmse = std::sqrt(sq_sum / errors.size());
  s.q025 = quantile(errors, 0.025);
  s.q25 = quantile(errors, 0.25);
  s.q50 = quantile(errors, 0.5);
  s.q75 = quantile(errors, 0.75);
  s.q975 = quantile(errors, 0.975);
  return s;
}

}  // namespace

PosteriorValidationReport validate_posterior(const ThetaSource& source,
                                             const std::vector<ValidationCase>& cases,
                                             int theta_draws, std::uint64_t seed,
                                             std::optional<Eigen::VectorXd> reference_theta) {
  if (cases.empty()) throw ValidationError("validate_posterior: no cases");
  if (theta_draws < 1) throw ValidationError("validate_posterior: theta_draws must be >= 1");

  // Materialize the parameter samples once; every case sees the same ones.
  std::vector<Eigen::VectorXd> thetas;
  Rng rng(seed);
  switch (source.kind) {
    case ThetaSource::Kind::point:
      thetas.push_back(source.point);
      break;
    case ThetaSource::Kind::predictive_normal:
      for (int i = 0; i < theta_draws; ++i) {
        Eigen::VectorXd t(source.predictive_mean.size());
        for (Eigen::Index j = 0; j < t.size(); ++j) {
          t(j) = rng.normal(source.predictive_mean(j), source.predictive_sd(j));
        }
        thetas.push_back(std::move(t));
      }
      break;
    case ThetaSource::Kind::chains:
      for (int i = 0; i < theta_draws; ++i) {
        const auto row = static_cast<Eigen::Index>(
            rng.uniform_int(static_cast<std::uint64_t>(source.draws.rows())));
        thetas.push_back(source.draws.row(row).transpose());
      }
      break;
  }

  PosteriorValidationReport report;
  for (const auto& vc : cases) {
    if (vc.observed == nullptr || !vc.predict) {
      throw ValidationError("validate_posterior: case without data or predictor");
    }
    const std::string split = vc.is_test ? "test" : "train";

    std::vector<double> errors;
    for (const auto& theta : thetas) {
      const Eigen::VectorXd pred = vc.predict(theta);
      const Eigen::VectorXd e = vc.observed->flattened - pred;
      errors.insert(errors.end(), e.data(), e.data() + e.size());
    }
    ErrorStats posterior = stats_from_errors(std::move(errors));
    posterior.case_id = vc.observed->id;
    posterior.split = split;
    posterior.source = "posterior";
    report.rows.push_back(posterior);

    const Eigen::VectorXd ref = reference_theta.value_or(
        Eigen::VectorXd::Ones(thetas.front().size()));
    const Eigen::VectorXd ref_error = vc.observed->flattened - vc.predict(ref);
    ErrorStats prior = stats_from_errors(
        std::vector<double>(ref_error.data(), ref_error.data() + ref_error.size()));
    prior.case_id = vc.observed->id;
    prior.split = split;
    prior.source = "prior";
    report.rows.push_back(prior);
  }
  return report;
}

const ErrorStats* PosteriorValidationReport::find(const std::string& case_id,
                                                  const std::string& source) const {
  for (const auto& r : rows) {
    if (r.case_id == case_id && r.source == source) return &r;
  }
  return nullptr;
}

double PosteriorValidationReport::pooled_mae(const std::string& split,
                                             const std::string& source) const {
  double weighted = 0.0;
  long total = 0;
  for (const auto& r : rows) {
    if (r.split == split && r.source == source) {
      weighted += r.mae * r.samples;
      total += r.samples;
    }
  }
  if (total == 0) throw ValidationError("validation report: no rows for split '" + split + "'");
  return weighted / static_cast<double>(total);
}

void PosteriorValidationReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("validation report: cannot write " + path.string());
  out << "case_id,split,source,samples,mean,sd,mae,rmse,q025,q25,q50,q75,q975\n";
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.split << ',' << r.source << ',' << r.samples << ','
        << format_double(r.mean) << ',' << format_double(r.sd) << ',' << format_double(r.mae)
        << ',' << format_double(r.rmse) << ',' << format_double(r.q025) << ','
        << format_double(r.q25) << ',' << format_double(r.q50) << ',' << format_double(r.q75)
        << ',' << format_double(r.q975) << '\n';
  }
}

std::string PriorSpec::to_json_string() const {
  validate();
  auto law_json = [](const PriorLaw& law) {
    nlohmann::json j;
    j["type"] = law.kind == PriorLaw::Kind::uniform ? "uniform" : "normal";
    if (law.kind == PriorLaw::Kind::uniform) {
      j["low"] = law.a;
      j["high"] = law.b;
    } else {
      j["mean"] = law.a;
      j["sd"] = law.b;
    }
    return j;
  };
  nlohmann::json j;
  j["type"] = "priors";
  j["names"] = names;
  nlohmann::json laws_json = nlohmann::json::array();
  for (const auto& law : laws) laws_json.push_back(law_json(law));
  j["laws"] = std::move(laws_json);
  nlohmann::json hm = nlohmann::json::array(), hs = nlohmann::json::array();
  for (const auto& law : hyper_mean_laws) hm.push_back(law_json(law));
  for (const auto& law : hyper_sd_laws) hs.push_back(law_json(law));
  j["hyper_mean_laws"] = std::move(hm);
  j["hyper_sd_laws"] = std::move(hs);
  return j.dump(2);
}

PriorSpec PriorSpec::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("type", "") != "priors") throw ValidationError("priors: not a priors document");
  auto law_from = [](const nlohmann::json& lj) {
    const auto type = lj.at("type").get<std::string>();
    if (type == "uniform") {
      return PriorLaw::uniform(lj.at("low").get<double>(), lj.at("high").get<double>());
    }
    if (type == "normal") {
      return PriorLaw::normal(lj.at("mean").get<double>(), lj.at("sd").get<double>());
    }
    throw ValidationError("priors: unknown law type '" + type + "'");
  };
  PriorSpec p;
  p.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& lj : j.at("laws")) p.laws.push_back(law_from(lj));
  for (const auto& lj : j.value("hyper_mean_laws", nlohmann::json::array())) {
    p.hyper_mean_laws.push_back(law_from(lj));
  }
  for (const auto& lj : j.value("hyper_sd_laws", nlohmann::json::array())) {
    p.hyper_sd_laws.push_back(law_from(lj));
  }
  p.validate();
  return p;
}

}  // namespace iuq::calib
