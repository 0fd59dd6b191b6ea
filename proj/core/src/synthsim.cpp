#include "iuq/synthsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "iuq/errors.hpp"
#include "iuq/rng.hpp"

#include <nlohmann/json.hpp>

namespace iuq::synthsim {

namespace {

// Engine constants. The functional form is a stand-in for a system code: a
// saturating nonlinear map of a parameter-weighted combination of boundary
// channels with a first-order lag. Values are tuned so the 120-dim response
// family compresses to a handful of principal components, like the transient
// data it mimics.
constexpr double kPressureRef = 15.0;   // MPa
constexpr double kFlowRef = 10.0;       // kg/s
constexpr double kPowerRef = 2.0;       // MW
constexpr double kTempRef = 300.0;      // C

constexpr double kPowerExp = 1.2;
constexpr double kTempExp = 3.0;
constexpr double kFlowExp = 1.0;
constexpr double kPressureExp = 0.8;

constexpr double kLagBase = 4.0;        // seconds at nominal lag multiplier
constexpr double kLagFloor = 0.05;      // keeps tau positive and smooth near 0
constexpr double kSlopeBase = 1.4;      // logistic steepness
constexpr double kDriveMid = 1.15;      // logistic midpoint on the effective drive scale
constexpr double kOffsetScale = 0.8;    // effect of the offset multiplier

// Multipliers act through saturating maps, like closure coefficients in a
// system code: strong response near nominal, diminishing returns far out.
// effective_multiplier(1) = 0.924, slope 1 at 0, plateau 2.
double effective_multiplier(double x) { return 2.0 * std::tanh(0.5 * x); }

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Softplus keeps the time constant positive and smooth for any multiplier;
// normalized so the nominal multiplier gives kLagBase exactly.
double lag_time_constant(double lag_multiplier) {
  const double softplus = std::log1p(std::exp(lag_multiplier));
  const double nominal = std::log1p(std::exp(1.0));
  return kLagBase * (kLagFloor + softplus) / (kLagFloor + nominal);
}

// Normalized drive combining the four channels; > 0, increases when flow or
// pressure drop and when power or inlet temperature rise.
double drive(const CaseSpec& spec, double t) {
  const double pw = spec.power.at(t) / kPowerRef;
  const double tc = spec.inlet_temperature.at(t) / kTempRef;
  const double fl = spec.flow.at(t) / kFlowRef;
  const double pr = spec.pressure.at(t) / kPressureRef;
  return std::pow(pw, kPowerExp) * std::pow(tc, kTempExp) /
         (std::pow(fl, kFlowExp) * std::pow(pr, kPressureExp));
}

double bump_value(const Discrepancy& d, double t, double duration,
                  const std::pair<double, double>& window) {
  double center = 0.0;
  double width = 0.0;
  if (d.form == "tail_bump") {
    center = 0.88 * duration;
    width = 0.06 * duration;
  } else if (d.form == "mid_bump") {
    center = 0.5 * (window.first + window.second);
    width = 0.25 * (window.second - window.first);
  } else {
    throw ValidationError("discrepancy: unknown form '" + d.form + "'");
  }
  const double z = (t - center) / width;
  return d.magnitude * std::exp(-0.5 * z * z);
}

}  // namespace

std::string kind_code(TransientKind kind) {
  switch (kind) {
    case TransientKind::flow_reduction: return "FR";
    case TransientKind::power_increase: return "PI";
    case TransientKind::temperature_increase: return "TI";
  }
  return "FR";
}

double ChannelProfile::at(double t) const {
  if (ramp_end <= ramp_start) return start_level;
  return start_level +
         (end_level - start_level) * smoothstep((t - ramp_start) / (ramp_end - ramp_start));
}

Eigen::VectorXd CaseSpec::time_grid() const {
  return Eigen::VectorXd::LinSpaced(steps, 0.0, duration);
}

std::pair<double, double> CaseSpec::transition_window() const {
  const ChannelProfile* active = &flow;
  if (kind == TransientKind::power_increase) active = &power;
  if (kind == TransientKind::temperature_increase) active = &inlet_temperature;
  return {active->ramp_start, active->ramp_end};
}

void validate_spec(const CaseSpec& spec) {
  if (spec.id.empty()) throw ValidationError("case spec: empty id");
  if (spec.steps < 10) throw ValidationError("case spec: need at least 10 time steps");
  if (!(spec.duration > 0.0)) throw ValidationError("case spec: duration must be positive");
  for (const auto* ch : {&spec.pressure, &spec.flow, &spec.power, &spec.inlet_temperature}) {
    if (!std::isfinite(ch->start_level) || !std::isfinite(ch->end_level) ||
        !std::isfinite(ch->ramp_start) || !std::isfinite(ch->ramp_end)) {
      throw ValidationError("case spec: non-finite channel profile");
    }
    if (ch->start_level <= 0.0 || ch->end_level <= 0.0) {
      throw ValidationError("case spec: channel levels must be positive");
    }
  }
  if ((spec.location_gains.array() <= 0.0).any()) {
    throw ValidationError("case spec: location gains must be positive");
  }
  if (spec.discrepancy.has_value() && !std::isfinite(spec.discrepancy->magnitude)) {
    throw ValidationError("case spec: non-finite discrepancy magnitude");
  }
}

const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names = {"gain", "lag", "offset", "slope"};
  return names;
}

TimeSeriesGrid boundary_grid(const CaseSpec& spec) {
  validate_spec(spec);
  TimeSeriesGrid grid;
  grid.times = spec.time_grid();
  grid.locations = {"pressure", "flow", "power", "inlet_temperature"};
  grid.values.resize(4, spec.steps);
  for (int i = 0; i < spec.steps; ++i) {
    const double t = grid.times(i);
    grid.values(0, i) = spec.pressure.at(t);
    grid.values(1, i) = spec.flow.at(t);
    grid.values(2, i) = spec.power.at(t);
    grid.values(3, i) = spec.inlet_temperature.at(t);
  }
  return grid;
}

TimeSeriesGrid simulate(const Eigen::VectorXd& theta, const CaseSpec& spec) {
  validate_spec(spec);
  if (theta.size() != kParameterCount || !theta.allFinite()) {
    throw ValidationError("simulate: theta must be 4 finite multipliers");
  }
  const double gain = effective_multiplier(theta(0));
  const double offset = std::tanh(theta(2) - 1.0);
  const double slope = effective_multiplier(theta(3));

  TimeSeriesGrid grid;
  grid.times = spec.time_grid();
  grid.locations = {"lower", "middle", "upper"};
  grid.values.resize(3, spec.steps);

  const double tau = lag_time_constant(theta(1));
  const double dt = spec.duration / (spec.steps - 1);
  const double decay = std::exp(-dt / tau);

  double state = drive(spec, 0.0);
  for (int i = 0; i < spec.steps; ++i) {
    const double t = grid.times(i);
    if (i > 0) {
      const double target = drive(spec, t);
      state = target + (state - target) * decay;
    }
    for (int l = 0; l < 3; ++l) {
      const double arg = kSlopeBase * slope * spec.location_gains(l) *
                             (gain * state - kDriveMid) +
                         kOffsetScale * offset;
      grid.values(l, i) = logistic(arg);
    }
  }
  return grid;
}

Eigen::VectorXd simulate_flat(const Eigen::VectorXd& theta, const CaseSpec& spec) {
  return flatten(simulate(theta, spec));
}

double smoothness_bound(const CaseSpec& spec, const Eigen::VectorXd& theta) {
  validate_spec(spec);
  const Eigen::VectorXd times = spec.time_grid();
  double u_min = std::numeric_limits<double>::infinity();
  double u_max = -u_min;
  for (int i = 0; i < spec.steps; ++i) {
    const double u = drive(spec, times(i));
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  }
  const double dt = spec.duration / (spec.steps - 1);
  const double tau = lag_time_constant(theta(1));
  const double state_step = (1.0 - std::exp(-dt / tau)) *
                            std::abs(effective_multiplier(theta(0))) * (u_max - u_min);
  const double max_gain = spec.location_gains.maxCoeff();
  // 0.25 is the logistic's maximum derivative.
  return 0.25 * kSlopeBase * std::abs(effective_multiplier(theta(3))) * max_gain * state_step +
         1e-12;
}

TransientCase synthesize_observations(const CaseSpec& spec, const Eigen::VectorXd& theta_star,
                                      const NoiseLaw& noise, std::uint64_t seed) {
  if (noise.sd < 0.0) throw ValidationError("synthesize_observations: negative noise sd");
  if (noise.kind == NoiseLaw::Kind::ar1 && !(noise.rho > -1.0 && noise.rho < 1.0)) {
    throw ValidationError("synthesize_observations: ar1 rho must be in (-1, 1)");
  }

  TimeSeriesGrid meas = simulate(theta_star, spec);
  if (spec.discrepancy.has_value() && spec.discrepancy->magnitude != 0.0) {
    const auto window = spec.transition_window();
    for (int i = 0; i < spec.steps; ++i) {
      const double b =
          bump_value(*spec.discrepancy, meas.times(i), spec.duration, window);
      meas.values.col(i).array() += b;
    }
  }

  Rng rng(seed);
  if (noise.sd > 0.0) {
    for (Eigen::Index l = 0; l < meas.values.rows(); ++l) {
      if (noise.kind == NoiseLaw::Kind::iid) {
        for (Eigen::Index i = 0; i < meas.values.cols(); ++i) {
          meas.values(l, i) += rng.normal(0.0, noise.sd);
        }
      } else {
        double e = rng.normal(0.0, noise.sd);
        meas.values(l, 0) += e;
        const double innovation_sd = noise.sd * std::sqrt(1.0 - noise.rho * noise.rho);
        for (Eigen::Index i = 1; i < meas.values.cols(); ++i) {
          e = noise.rho * e + rng.normal(0.0, innovation_sd);
          meas.values(l, i) += e;
        }
      }
    }
  }

  return make_case(spec.id, boundary_grid(spec), std::move(meas));
}

covest::MemberSimulator make_bc_member_simulator(const CaseSpec& spec, const BcDistributions& bc,
                                                 const Eigen::VectorXd& theta_nominal) {
  validate_spec(spec);
  return [spec, bc, theta = theta_nominal](Rng& rng) -> std::optional<Eigen::VectorXd> {
    CaseSpec perturbed = spec;
    auto apply = [&rng](ChannelProfile& ch, const BcNoise& law) {
      const double scale = rng.normal(1.0, law.scale_sd);
      const double shift = rng.normal(0.0, law.shift_sd);
      ch.start_level *= scale;
      ch.end_level *= scale;
      ch.ramp_start += shift;
      ch.ramp_end += shift;
    };
    apply(perturbed.pressure, bc.pressure);
    apply(perturbed.flow, bc.flow);
    apply(perturbed.power, bc.power);
    apply(perturbed.inlet_temperature, bc.inlet_temperature);
    if (perturbed.pressure.start_level <= 0.0 || perturbed.flow.start_level <= 0.0 ||
        perturbed.power.start_level <= 0.0 || perturbed.inlet_temperature.start_level <= 0.0) {
      return std::nullopt;  // unphysical draw, drop the member
    }
    return simulate_flat(theta, perturbed);
  };
}

namespace {

CaseSpec base_case(const std::string& assembly, TransientKind kind, double flow_end,
                   double power_end, double temp_end, const Eigen::Vector3d& gains) {
  CaseSpec spec;
  spec.id = assembly + "-" + kind_code(kind);
  spec.kind = kind;
  spec.steps = 40;
  spec.duration = 60.0;
  spec.location_gains = gains;
  spec.pressure = {kPressureRef, kPressureRef, 0.0, 0.0};
  spec.flow = {kFlowRef, kFlowRef, 0.0, 0.0};
  spec.power = {kPowerRef, kPowerRef, 0.0, 0.0};
  spec.inlet_temperature = {kTempRef, kTempRef, 0.0, 0.0};
  const double ramp_start = 20.0;
  const double ramp_end = 32.0;
  switch (kind) {
    case TransientKind::flow_reduction:
      spec.flow = {kFlowRef, flow_end, ramp_start, ramp_end};
      break;
    case TransientKind::power_increase:
      spec.power = {kPowerRef, power_end, ramp_start, ramp_end};
      break;
    case TransientKind::temperature_increase:
      spec.inlet_temperature = {kTempRef, temp_end, ramp_start, ramp_end};
      break;
  }
  return spec;
}

}  // namespace

const CaseSpec& BenchmarkSuite::case_by_id(const std::string& id) const {
  for (const auto& c : cases) {
    if (c.id == id) return c;
  }
  throw ValidationError("benchmark suite: unknown case id '" + id + "'");
}

Eigen::Index BenchmarkSuite::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].id == id) return static_cast<Eigen::Index>(i);
  }
  throw ValidationError("benchmark suite: unknown case id '" + id + "'");
}

BenchmarkSuite make_benchmark_suite(std::uint64_t seed) {
  BenchmarkSuite suite;

  struct Assembly {
    std::string name;
    Eigen::Vector3d gains;
    double flow_end, power_end, temp_end;
  };
  const std::vector<Assembly> assemblies = {
      {"A", {0.70, 0.85, 1.00}, 5.5, 3.0, 335.0},
      {"B", {0.75, 0.90, 1.05}, 6.0, 2.8, 332.0},
      {"C", {0.65, 0.80, 0.95}, 5.0, 3.2, 338.0},
  };
  const TransientKind kinds[] = {TransientKind::flow_reduction, TransientKind::power_increase,
                                 TransientKind::temperature_increase};
  for (const auto& a : assemblies) {
    for (const auto kind : kinds) {
      suite.cases.push_back(base_case(a.name, kind, a.flow_end, a.power_end, a.temp_end, a.gains));
    }
  }

  suite.hyper_mean = Eigen::Vector4d(1.6, 1.1, 0.9, 1.4);
  suite.hyper_sd = Eigen::Vector4d(0.30, 0.20, 0.15, 0.25);
  suite.theta_star = suite.hyper_mean;

  Rng rng(seed);
  suite.theta_star_groups.resize(static_cast<Eigen::Index>(suite.cases.size()), 4);
  for (Eigen::Index g = 0; g < suite.theta_star_groups.rows(); ++g) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      suite.theta_star_groups(g, j) = rng.normal(suite.hyper_mean(j), suite.hyper_sd(j));
    }
  }

  // Same 5/4 split shape as the transient study this mirrors.
  suite.train_ids = {"A-FR", "A-PI", "B-FR", "B-TI", "C-FR"};
  suite.test_ids = {"A-TI", "B-PI", "C-PI", "C-TI"};
  return suite;
}

namespace {

nlohmann::json profile_to_json(const ChannelProfile& ch) {
  return {{"start_level", ch.start_level},
          {"end_level", ch.end_level},
          {"ramp_start", ch.ramp_start},
          {"ramp_end", ch.ramp_end}};
}

ChannelProfile profile_from_json(const nlohmann::json& j) {
  ChannelProfile ch;
  ch.start_level = j.at("start_level").get<double>();
  ch.end_level = j.at("end_level").get<double>();
  ch.ramp_start = j.at("ramp_start").get<double>();
  ch.ramp_end = j.at("ramp_end").get<double>();
  return ch;
}

}  // namespace

void CaseSpec::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["type"] = "case_spec";
  j["id"] = id;
  j["kind"] = kind_code(kind);
  j["steps"] = steps;
  j["duration"] = duration;
  j["pressure"] = profile_to_json(pressure);
  j["flow"] = profile_to_json(flow);
  j["power"] = profile_to_json(power);
  j["inlet_temperature"] = profile_to_json(inlet_temperature);
  j["location_gains"] = {location_gains(0), location_gains(1), location_gains(2)};
  if (discrepancy.has_value()) {
    j["discrepancy"] = {{"form", discrepancy->form}, {"magnitude", discrepancy->magnitude}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("case spec: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CaseSpec CaseSpec::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("case spec: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("type", "") != "case_spec") {
    throw ValidationError("case spec: not a case spec document: " + path.string());
  }
  CaseSpec spec;
  spec.id = j.at("id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "FR") spec.kind = TransientKind::flow_reduction;
  else if (kind == "PI") spec.kind = TransientKind::power_increase;
  else if (kind == "TI") spec.kind = TransientKind::temperature_increase;
  else throw ValidationError("case spec: unknown kind '" + kind + "'");
  spec.steps = j.at("steps").get<int>();
  spec.duration = j.at("duration").get<double>();
  spec.pressure = profile_from_json(j.at("pressure"));
  spec.flow = profile_from_json(j.at("flow"));
  spec.power = profile_from_json(j.at("power"));
  spec.inlet_temperature = profile_from_json(j.at("inlet_temperature"));
  const auto gains = j.at("location_gains").get<std::vector<double>>();
  if (gains.size() != 3) throw ValidationError("case spec: need 3 location gains");
  spec.location_gains = Eigen::Vector3d(gains[0], gains[1], gains[2]);
  if (j.contains("discrepancy")) {
    Discrepancy d;
    d.form = j.at("discrepancy").at("form").get<std::string>();
    d.magnitude = j.at("discrepancy").at("magnitude").get<double>();
    spec.discrepancy = d;
  }
  validate_spec(spec);
  return spec;
}

}  // namespace iuq::synthsim
