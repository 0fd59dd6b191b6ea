#include "iuq/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "iuq/csv.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::sampler {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_add_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_target(const TargetDensity& target, bool need_gradient) {
  if (target.dim < 1) throw ValidationError("sampler: target dimension must be >= 1");
  if (!target.logp) throw ValidationError("sampler: target has no logp");
  if (need_gradient && !target.has_gradient()) {
    throw ValidationError("sampler: target has no gradient; use rwm_sample");
  }
  if (target.names.size() != static_cast<std::size_t>(target.dim) ||
      target.transforms.size() != static_cast<std::size_t>(target.dim)) {
    throw ValidationError("sampler: names/transforms size must match dim");
  }
}

// ---------------------------------------------------------------------------
// NUTS

struct State {
  Eigen::VectorXd z;
  Eigen::VectorXd grad;
  double logp = -kInf;
};

struct ChainWorkspace {
  const TargetDensity* target = nullptr;
  const NutsConfig* config = nullptr;
  Eigen::VectorXd inv_metric;  // diagonal of the inverse mass matrix
  double h0 = 0.0;             // Hamiltonian at trajectory start
  double step_size = 1.0;
  int n_leapfrog = 0;
  double sum_accept = 0.0;
  bool any_divergence = false;

  double kinetic(const Eigen::VectorXd& p) const {
    return 0.5 * (p.array().square() * inv_metric.array()).sum();
  }

  State evaluate(Eigen::VectorXd z) const {
    State s;
    s.logp = target->logp(z);
    s.grad = std::isfinite(s.logp) ? target->grad_logp(z)
                                   : Eigen::VectorXd::Zero(z.size());
    if (!s.grad.allFinite()) s.logp = -kInf;
    s.z = std::move(z);
    return s;
  }

  // One leapfrog step of size v * step_size from (s, p), updating both.
  void leapfrog(State& s, Eigen::VectorXd& p, int v) const {
    const double eps = v * step_size;
    p += 0.5 * eps * s.grad;
    Eigen::VectorXd z = s.z + eps * (inv_metric.array() * p.array()).matrix();
    State next = evaluate(std::move(z));
    p += 0.5 * eps * next.grad;
    s = std::move(next);
  }
};

struct Tree {
  State backward, forward;  // trajectory ends
  Eigen::VectorXd p_backward, p_forward;
  Eigen::VectorXd rho;      // momentum sum across the subtree
  State proposal;
  double log_sum_weight = -kInf;
  bool diverged = false;
  bool turned = false;
};

bool uturn(const ChainWorkspace& ws, const Eigen::VectorXd& rho, const Eigen::VectorXd& p_backward,
           const Eigen::VectorXd& p_forward) {
  const Eigen::VectorXd rho_sharp = (ws.inv_metric.array() * rho.array()).matrix();
  return rho_sharp.dot(p_backward) <= 0.0 || rho_sharp.dot(p_forward) <= 0.0;
}

Tree leaf(ChainWorkspace& ws, const State& from, const Eigen::VectorXd& p_from, int direction,
          Rng& rng) {
  (void)rng;
  State s = from;
  Eigen::VectorXd p = p_from;
  ws.leapfrog(s, p, direction);
  ++ws.n_leapfrog;

  Tree t;
  const double h = std::isfinite(s.logp) ? -s.logp + ws.kinetic(p) : kInf;
  const double energy_error = h - ws.h0;
  t.diverged = !(energy_error < ws.config->divergence_threshold);
  t.log_sum_weight = t.diverged ? -kInf : -energy_error;
  ws.sum_accept += std::isfinite(energy_error) ? std::min(1.0, std::exp(-energy_error)) : 0.0;
  t.backward = s;
  t.forward = s;
  t.p_backward = p;
  t.p_forward = p;
  t.rho = p;
  t.proposal = std::move(s);
  return t;
}

Tree build_tree(ChainWorkspace& ws, int depth, const State& from, const Eigen::VectorXd& p_from,
                int direction, Rng& rng) {
  if (depth == 0) return leaf(ws, from, p_from, direction, rng);

  Tree inner = build_tree(ws, depth - 1, from, p_from, direction, rng);
  if (inner.diverged || inner.turned) return inner;

  const State& cont = direction > 0 ? inner.forward : inner.backward;
  const Eigen::VectorXd& p_cont = direction > 0 ? inner.p_forward : inner.p_backward;
  Tree outer = build_tree(ws, depth - 1, cont, p_cont, direction, rng);

  Tree merged;
  merged.diverged = outer.diverged;
  merged.log_sum_weight = log_add_exp(inner.log_sum_weight, outer.log_sum_weight);
  // Multinomial sampling within the subtree.
  const double accept_outer = std::exp(outer.log_sum_weight - merged.log_sum_weight);
  merged.proposal =
      (rng.uniform() < accept_outer) ? std::move(outer.proposal) : std::move(inner.proposal);
  if (direction > 0) {
    merged.backward = std::move(inner.backward);
    merged.p_backward = std::move(inner.p_backward);
    merged.forward = std::move(outer.forward);
    merged.p_forward = std::move(outer.p_forward);
  } else {
    merged.backward = std::move(outer.backward);
    merged.p_backward = std::move(outer.p_backward);
    merged.forward = std::move(inner.forward);
    merged.p_forward = std::move(inner.p_forward);
  }
  merged.rho = inner.rho + outer.rho;
  merged.turned = outer.turned ||
                  uturn(ws, merged.rho, merged.p_backward, merged.p_forward);
  return merged;
}

// One NUTS transition; returns the accepted state and the mean accept
// statistic for dual averaging.
State nuts_transition(ChainWorkspace& ws, const State& current, Rng& rng, double* accept_stat,
                      bool* diverged) {
  Eigen::VectorXd p0(current.z.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    p0(i) = rng.normal() / std::sqrt(ws.inv_metric(i));
  }
  ws.h0 = -current.logp + ws.kinetic(p0);
  ws.n_leapfrog = 0;
  ws.sum_accept = 0.0;

  Tree trajectory;
  trajectory.backward = current;
  trajectory.forward = current;
  trajectory.p_backward = p0;
  trajectory.p_forward = p0;
  trajectory.rho = p0;
  trajectory.proposal = current;
  trajectory.log_sum_weight = 0.0;

  *diverged = false;
  for (int depth = 0; depth < ws.config->max_tree_depth; ++depth) {
    const int direction = rng.uniform() < 0.5 ? -1 : 1;
    const State& end = direction > 0 ? trajectory.forward : trajectory.backward;
    const Eigen::VectorXd& p_end = direction > 0 ? trajectory.p_forward : trajectory.p_backward;
    Tree subtree = build_tree(ws, depth, end, p_end, direction, rng);

    if (subtree.diverged) {
      *diverged = true;
      break;
    }
    if (subtree.turned) break;

    // Biased progressive sampling toward the new subtree.
    const double accept_new = std::exp(
        std::min(0.0, subtree.log_sum_weight - trajectory.log_sum_weight));
    if (rng.uniform() < accept_new) trajectory.proposal = subtree.proposal;

    trajectory.log_sum_weight =
        log_add_exp(trajectory.log_sum_weight, subtree.log_sum_weight);
    if (direction > 0) {
      trajectory.forward = std::move(subtree.forward);
      trajectory.p_forward = std::move(subtree.p_forward);
    } else {
      trajectory.backward = std::move(subtree.backward);
      trajectory.p_backward = std::move(subtree.p_backward);
    }
    trajectory.rho += subtree.rho;
    if (uturn(ws, trajectory.rho, trajectory.p_backward, trajectory.p_forward)) break;
  }

  *accept_stat = ws.n_leapfrog > 0 ? ws.sum_accept / ws.n_leapfrog : 0.0;
  return trajectory.proposal;
}

double find_reasonable_step_size(ChainWorkspace& ws, const State& start, Rng& rng) {
  ws.step_size = 1.0;
  Eigen::VectorXd p0(start.z.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    p0(i) = rng.normal() / std::sqrt(ws.inv_metric(i));
  }
  const double h0 = -start.logp + ws.kinetic(p0);

  auto accept_prob = [&]() {
    State s = start;
    Eigen::VectorXd p = p0;
    ws.leapfrog(s, p, 1);
    const double h = std::isfinite(s.logp) ? -s.logp + ws.kinetic(p) : kInf;
    return std::exp(std::min(0.0, h0 - h));
  };

  double prob = accept_prob();
  const double dir = prob > 0.5 ? 1.0 : -1.0;
  for (int i = 0; i < 100; ++i) {
    if (dir > 0 ? prob <= 0.5 : prob > 0.5) break;
    ws.step_size *= dir > 0 ? 2.0 : 0.5;
    if (ws.step_size > 1e7 || ws.step_size < 1e-10) break;
    prob = accept_prob();
  }
  return ws.step_size;
}

struct DualAveraging {
  double mu = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  double count = 1.0;
  double target = 0.8;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  void restart(double step_size, double target_accept) {
    mu = std::log(10.0 * step_size);
    log_eps_bar = std::log(step_size);
    h_bar = 0.0;
    count = 1.0;
    target = target_accept;
  }

  double update(double accept_stat) {
    const double eta = 1.0 / (count + kT0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_stat);
    const double log_eps = mu - std::sqrt(count) / kGamma * h_bar;
    const double weight = std::pow(count, -kKappa);
    log_eps_bar = weight * log_eps + (1.0 - weight) * log_eps_bar;
    count += 1.0;
    return std::exp(log_eps);
  }

  double final_step_size() const { return std::exp(log_eps_bar); }
};

// Online mean/variance accumulator for mass-matrix windows.
struct Welford {
  Eigen::VectorXd mean, m2;
  double n = 0.0;

  void reset(Eigen::Index dim) {
    mean = Eigen::VectorXd::Zero(dim);
    m2 = Eigen::VectorXd::Zero(dim);
    n = 0.0;
  }
  void add(const Eigen::VectorXd& x) {
    n += 1.0;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / n;
    m2.array() += delta.array() * (x - mean).array();
  }
  // Regularized variance estimate, shrunk toward a small diagonal.
  Eigen::VectorXd regularized_variance() const {
    Eigen::VectorXd var = m2 / std::max(1.0, n - 1.0);
    const double shrink = n / (n + 5.0);
    return (shrink * var.array() + (1.0 - shrink) * 1e-3).matrix();
  }
};

State initial_state(const TargetDensity& target, const ChainWorkspace& ws, Rng& rng,
                    double radius) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd z(target.dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform(-radius, radius);
    State s = ws.evaluate(std::move(z));
    if (std::isfinite(s.logp)) return s;
  }
  throw NumericError("sampler: could not find a finite-density starting point");
}

PosteriorChain run_nuts_chain(const TargetDensity& target, int warmup, int draws,
                              std::uint64_t seed, int chain_index, const NutsConfig& config) {
  Rng rng(seed, static_cast<std::uint64_t>(chain_index) + 1);

  ChainWorkspace ws;
  ws.target = &target;
  ws.config = &config;
  ws.inv_metric = Eigen::VectorXd::Ones(target.dim);

  State current = initial_state(target, ws, rng, config.init_radius);

  DualAveraging da;
  da.restart(find_reasonable_step_size(ws, current, rng), config.target_accept);

  // Stan-style warmup schedule: step-size-only buffers around doubling
  // variance-estimation windows.
  const int init_buffer = 75;
  const int term_buffer = 50;
  int window = 25;
  const bool adapt_metric = warmup >= init_buffer + term_buffer + 2 * window;
  int window_start = init_buffer;
  int window_end = adapt_metric ? init_buffer + window : warmup;
  Welford estimator;
  estimator.reset(target.dim);

  PosteriorChain chain;
  chain.names = target.names;
  chain.warmup = warmup;
  chain.seed = seed;
  chain.chain_index = chain_index;
  chain.draws.resize(draws, target.dim);

  int warmup_divergences = 0;
  double accept_sum = 0.0;

  for (int iter = 0; iter < warmup + draws; ++iter) {
    const bool in_warmup = iter < warmup;
    double accept_stat = 0.0;
    bool diverged = false;
    current = nuts_transition(ws, current, rng, &accept_stat, &diverged);

    if (in_warmup) {
      if (diverged) ++warmup_divergences;
      ws.step_size = da.update(accept_stat);

      if (adapt_metric && iter >= window_start && iter < window_end) {
        estimator.add(current.z);
      }
      if (adapt_metric && iter + 1 == window_end && window_end < warmup) {
        ws.inv_metric = estimator.regularized_variance();
        estimator.reset(target.dim);
        window_start = window_end;
        window *= 2;
        window_end = window_start + window;
        if (window_end + term_buffer + 2 * window > warmup) window_end = warmup - term_buffer;
        if (window_end <= window_start) window_end = warmup;
        da.restart(find_reasonable_step_size(ws, current, rng), config.target_accept);
      }
      if (iter + 1 == warmup) ws.step_size = da.final_step_size();
    } else {
      if (diverged) ++chain.divergences;
      accept_sum += accept_stat;
      Eigen::VectorXd x = target.to_constrained(current.z);
      chain.draws.row(iter - warmup) = x.transpose();
    }
  }

  if (warmup > 0 && warmup_divergences == warmup) {
    throw NumericError("sampler: chain " + std::to_string(chain_index) +
                       " diverged on every warmup iteration (step size " +
                       format_double(ws.step_size) + ")");
  }

  chain.step_size = ws.step_size;
  chain.mass_diagonal = ws.inv_metric;
  chain.mean_accept = draws > 0 ? accept_sum / draws : 0.0;
  return chain;
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis

PosteriorChain run_rwm_chain(const TargetDensity& target, int warmup, int draws,
                             std::uint64_t seed, int chain_index, const RwmConfig& config) {
  Rng rng(seed, static_cast<std::uint64_t>(chain_index) + 1);

  Eigen::VectorXd z(target.dim);
  double logp = -kInf;
  for (int attempt = 0; attempt < 100 && !std::isfinite(logp); ++attempt) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform(-config.init_radius, config.init_radius);
    logp = target.logp(z);
  }
  if (!std::isfinite(logp)) {
    throw NumericError("sampler: could not find a finite-density starting point");
  }

  double log_scale = std::log(config.init_scale);
  Eigen::VectorXd proposal_sd = Eigen::VectorXd::Ones(target.dim);
  Welford estimator;
  estimator.reset(target.dim);

  PosteriorChain chain;
  chain.names = target.names;
  chain.warmup = warmup;
  chain.seed = seed;
  chain.chain_index = chain_index;
  chain.draws.resize(draws, target.dim);

  double accept_sum = 0.0;
  for (int iter = 0; iter < warmup + draws; ++iter) {
    Eigen::VectorXd candidate = z;
    const double scale = std::exp(log_scale);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      candidate(i) += scale * proposal_sd(i) * rng.normal();
    }
    const double cand_logp = target.logp(candidate);
    const double accept_prob =
        std::isfinite(cand_logp) ? std::min(1.0, std::exp(cand_logp - logp)) : 0.0;
    if (rng.uniform() < accept_prob) {
      z = std::move(candidate);
      logp = cand_logp;
    }

    if (iter < warmup) {
      // Robbins-Monro adaptation toward the target acceptance rate.
      log_scale += (accept_prob - config.target_accept) / std::sqrt(iter / 8.0 + 1.0);
      estimator.add(z);
      if ((iter + 1) % 200 == 0 && estimator.n > 10) {
        proposal_sd = estimator.regularized_variance().cwiseSqrt();
      }
    } else {
      accept_sum += accept_prob;
      chain.draws.row(iter - warmup) = target.to_constrained(z).transpose();
    }
  }

  chain.step_size = std::exp(log_scale);
  chain.mass_diagonal = proposal_sd.array().square();
  chain.mean_accept = draws > 0 ? accept_sum / draws : 0.0;
  return chain;
}

template <class Runner>
std::vector<PosteriorChain> run_chains(int chains, const Runner& runner) {
  if (chains < 1) throw ValidationError("sampler: need at least one chain");
  std::vector<PosteriorChain> result(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    workers.emplace_back([c, &result, &errors, &runner] {
      try {
        result[static_cast<std::size_t>(c)] = runner(c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace

VarTransform VarTransform::log_odds(double low, double high) {
  VarTransform t;
  t.kind = Kind::log_odds;
  t.low = low;
  t.high = high;
  return t;
}

double VarTransform::to_constrained(double z) const {
  if (kind == Kind::identity) return z;
  return low + (high - low) / (1.0 + std::exp(-z));
}

double VarTransform::to_unconstrained(double x) const {
  if (kind == Kind::identity) return x;
  const double u = (x - low) / (high - low);
  return std::log(u / (1.0 - u));
}

double VarTransform::log_jacobian(double z) const {
  if (kind == Kind::identity) return 0.0;
  // d/dz [low + (high-low) sigmoid(z)] = (high-low) sigmoid(z)(1-sigmoid(z))
  const double s = 1.0 / (1.0 + std::exp(-z));
  return std::log(high - low) + std::log(s) + std::log(1.0 - s);
}

double VarTransform::d_log_jacobian(double z) const {
  if (kind == Kind::identity) return 0.0;
  const double s = 1.0 / (1.0 + std::exp(-z));
  return 1.0 - 2.0 * s;
}

Eigen::VectorXd TargetDensity::to_constrained(const Eigen::VectorXd& z) const {
  if (constrain_override) return constrain_override(z);
  Eigen::VectorXd x(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) x(i) = transforms[i].to_constrained(z(i));
  return x;
}

Eigen::VectorXd TargetDensity::to_unconstrained(const Eigen::VectorXd& x) const {
  if (unconstrain_override) return unconstrain_override(x);
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) z(i) = transforms[i].to_unconstrained(x(i));
  return z;
}

std::vector<PosteriorChain> nuts_sample(const TargetDensity& target, int chains, int warmup,
                                        int draws, std::uint64_t seed, const NutsConfig& config) {
  check_target(target, /*need_gradient=*/true);
  if (draws < 1) throw ValidationError("sampler: need at least one draw");
  return run_chains(chains, [&](int c) {
    return run_nuts_chain(target, warmup, draws, seed, c, config);
  });
}

std::vector<PosteriorChain> rwm_sample(const TargetDensity& target, int chains, int warmup,
                                       int draws, std::uint64_t seed, const RwmConfig& config) {
  check_target(target, /*need_gradient=*/false);
  if (draws < 1) throw ValidationError("sampler: need at least one draw");
  return run_chains(chains, [&](int c) {
    return run_rwm_chain(target, warmup, draws, seed, c, config);
  });
}

// ---------------------------------------------------------------------------
// Diagnostics

namespace {

// Split every chain in half; returns sequences x dims.
std::vector<Eigen::MatrixXd> split_chains(const std::vector<PosteriorChain>& chains) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& c : chains) {
    const Eigen::Index n = c.draws.rows();
    const Eigen::Index half = n / 2;
    if (half < 2) throw ValidationError("diagnostics: need at least 4 draws per chain");
    out.push_back(c.draws.topRows(half));
    out.push_back(c.draws.middleRows(n - half, half));
  }
  return out;
}

// Autocovariance at lag t about the sequence mean, divisor n.
double autocov(const Eigen::VectorXd& x, Eigen::Index lag) {
  const Eigen::Index n = x.size();
  const double mu = x.mean();
  double s = 0.0;
  for (Eigen::Index i = 0; i + lag < n; ++i) s += (x(i) - mu) * (x(i + lag) - mu);
  return s / static_cast<double>(n);
}

}  // namespace

Eigen::VectorXd rhat(const std::vector<PosteriorChain>& chains) {
  if (chains.size() < 2) throw ValidationError("rhat: need at least 2 chains");
  const auto seqs = split_chains(chains);
  const auto m = static_cast<double>(seqs.size());
  const double n = static_cast<double>(seqs.front().rows());
  const Eigen::Index dim = seqs.front().cols();

  Eigen::VectorXd result(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    double grand_mean = 0.0;
    std::vector<double> means, vars;
    for (const auto& s : seqs) {
      std::vector<double> col(s.col(d).data(), s.col(d).data() + s.rows());
      means.push_back(mean(col));
      vars.push_back(sample_variance(col));
      grand_mean += means.back();
    }
    grand_mean /= m;
    double b = 0.0;
    for (double mu : means) b += (mu - grand_mean) * (mu - grand_mean);
    b *= n / (m - 1.0);
    const double w = mean(vars);
    if (w <= 0.0) {
      result(d) = kNaN;  // degenerate: zero within-sequence variance
      continue;
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    result(d) = std::sqrt(var_plus / w);
  }
  return result;
}

Eigen::VectorXd ess(const std::vector<PosteriorChain>& chains) {
  if (chains.empty()) throw ValidationError("ess: no chains");
  const auto seqs = split_chains(chains);
  const auto m = static_cast<double>(seqs.size());
  const Eigen::Index n = seqs.front().rows();
  const Eigen::Index dim = seqs.front().cols();

  Eigen::VectorXd result(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    double w = 0.0;       // mean within-sequence variance (unbiased)
    double b_over_n = 0.0;
    {
      std::vector<double> means;
      for (const auto& s : seqs) {
        std::vector<double> col(s.col(d).data(), s.col(d).data() + s.rows());
        w += sample_variance(col) / m;
        means.push_back(mean(col));
      }
      b_over_n = m > 1 ? sample_variance(means) : 0.0;
    }
    const double var_plus = (static_cast<double>(n) - 1.0) / n * w + b_over_n;
    if (var_plus <= 0.0 || w <= 0.0) {
      result(d) = kNaN;  // degenerate: constant draws
      continue;
    }

    // Combined autocorrelations, Geyer initial positive + monotone sequence.
    double tau = 0.0;
    double prev_pair = kInf;
    for (Eigen::Index lag = 0; lag + 1 < n; lag += 2) {
      double acov_lag = 0.0, acov_next = 0.0;
      for (const auto& s : seqs) {
        acov_lag += autocov(s.col(d), lag) / m;
        acov_next += autocov(s.col(d), lag + 1) / m;
      }
      double rho_lag = 1.0 - (w - acov_lag) / var_plus;
      double rho_next = 1.0 - (w - acov_next) / var_plus;
      if (lag == 0) rho_lag = 1.0;
      double pair = rho_lag + rho_next;
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair);
      prev_pair = pair;
      tau += 2.0 * pair;
    }
    tau -= 1.0;  // lag-0 term is counted once, not twice
    tau = std::max(tau, 1.0 / std::log10(m * n + 10.0));
    result(d) = m * static_cast<double>(n) / tau;
  }
  return result;
}

Eigen::MatrixXd pooled_draws(const std::vector<PosteriorChain>& chains) {
  if (chains.empty()) throw ValidationError("pooled_draws: no chains");
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.draws.rows();
  Eigen::MatrixXd pooled(total, chains.front().draws.cols());
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    pooled.middleRows(row, c.draws.rows()) = c.draws;
    row += c.draws.rows();
  }
  return pooled;
}

Eigen::VectorXd mcse_mean(const std::vector<PosteriorChain>& chains) {
  const Eigen::MatrixXd pooled = pooled_draws(chains);
  const Eigen::VectorXd n_eff = ess(chains);
  Eigen::VectorXd out(pooled.cols());
  for (Eigen::Index d = 0; d < pooled.cols(); ++d) {
    std::vector<double> col(pooled.col(d).data(), pooled.col(d).data() + pooled.rows());
    out(d) = sample_sd(col) / std::sqrt(n_eff(d));
  }
  return out;
}

void save_chains(const std::filesystem::path& directory,
                 const std::vector<PosteriorChain>& chains) {
  if (chains.empty()) throw ValidationError("save_chains: no chains");
  std::filesystem::create_directories(directory);
  for (const auto& c : chains) {
    csv::write(directory / ("chain_" + std::to_string(c.chain_index) + ".csv"), c.names, c.draws);
  }

  nlohmann::json diag;
  diag["type"] = "chain_diagnostics";
  diag["parameters"] = chains.front().names;
  diag["chains"] = chains.size();
  diag["draws_per_chain"] = chains.front().draws.rows();
  diag["warmup"] = chains.front().warmup;
  diag["seed"] = chains.front().seed;
  int total_divergences = 0;
  nlohmann::json per_chain = nlohmann::json::array();
  for (const auto& c : chains) {
    total_divergences += c.divergences;
    per_chain.push_back({{"chain", c.chain_index},
                         {"divergences", c.divergences},
                         {"step_size", c.step_size},
                         {"mean_accept", c.mean_accept}});
  }
  diag["per_chain"] = std::move(per_chain);
  diag["divergences"] = total_divergences;
  auto vec_or_null = [](const Eigen::VectorXd& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::isnan(v(i))) arr.push_back(nullptr);
      else arr.push_back(v(i));
    }
    return arr;
  };
  if (chains.size() >= 2 && chains.front().draws.rows() >= 4) {
    diag["rhat"] = vec_or_null(rhat(chains));
    diag["ess"] = vec_or_null(ess(chains));
  }
  std::ofstream out(directory / "diagnostics.json", std::ios::binary);
  if (!out) throw ValidationError("save_chains: cannot write diagnostics.json");
  out << diag.dump(2) << '\n';
}

std::vector<PosteriorChain> load_chains(const std::filesystem::path& directory) {
  std::ifstream in(directory / "diagnostics.json");
  if (!in) throw ValidationError("load_chains: missing diagnostics.json in " + directory.string());
  nlohmann::json diag = nlohmann::json::parse(in);
  const auto n_chains = diag.at("chains").get<int>();

  std::vector<PosteriorChain> chains;
  for (int c = 0; c < n_chains; ++c) {
    const auto path = directory / ("chain_" + std::to_string(c) + ".csv");
    const auto table = csv::read(path);
    PosteriorChain chain;
    chain.names = table.header;
    chain.draws = table.values;
    chain.chain_index = c;
    chain.warmup = diag.value("warmup", 0);
    chain.seed = diag.value("seed", 0ULL);
    for (const auto& pc : diag.at("per_chain")) {
      if (pc.at("chain").get<int>() == c) {
        chain.divergences = pc.at("divergences").get<int>();
        chain.step_size = pc.at("step_size").get<double>();
        chain.mean_accept = pc.at("mean_accept").get<double>();
      }
    }
    chains.push_back(std::move(chain));
  }
  return chains;
}

}  // namespace iuq::sampler
