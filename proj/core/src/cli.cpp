#include "iuq/cli.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "iuq/calib.hpp"
#include "iuq/core.hpp"
#include "iuq/covest.hpp"
#include "iuq/csv.hpp"
#include "iuq/doe.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/report.hpp"
#include "iuq/sampler.hpp"
#include "iuq/surrogate.hpp"
#include "iuq/synthsim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace iuq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  const char* root = std::getenv("IUQ_OUTPUT_ROOT");
  if (root != nullptr && *root != '\0' && p.is_relative()) return fs::path(root) / p;
  return p;
}

std::string fnv1a64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot hash missing file " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

struct Manifest {
  std::string command;
  std::map<std::string, std::string> inputs;  // path -> hash
  std::vector<std::string> outputs;
  json config = json::object();
  std::uint64_t seed = 0;

  void add_input(const fs::path& p) { inputs[p.string()] = fnv1a64(p); }
  void add_output(const fs::path& p) { outputs.push_back(p.string()); }

  void write(const fs::path& path) const {
    json j;
    j["type"] = "manifest";
    j["version"] = version();
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
  }
};

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::pair<double, double>> parse_bounds(const std::string& text) {
  std::vector<std::pair<double, double>> bounds;
  for (const auto& part : split_list(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      throw ValidationError("bounds: expected low:high, got '" + part + "'");
    }
    bounds.emplace_back(std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1)));
  }
  if (bounds.empty()) throw ValidationError("bounds: empty specification");
  return bounds;
}

Eigen::VectorXd parse_vector(const std::string& text) {
  const auto parts = split_list(text);
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Eigen::Index>(i)) = std::stod(parts[i]);
  return v;
}

synthsim::NoiseLaw parse_noise(const std::string& text) {
  const auto parts = split_list(text, ':');
  if (parts.size() == 2 && parts[0] == "iid") return synthsim::NoiseLaw::iid(std::stod(parts[1]));
  if (parts.size() == 3 && parts[0] == "ar1") {
    return synthsim::NoiseLaw::ar1(std::stod(parts[1]), std::stod(parts[2]));
  }
  throw ValidationError("noise: expected iid:<sd> or ar1:<rho>:<sd>, got '" + text + "'");
}

// Training tables: parameter columns first, then y_0000... output columns.
void write_training_csv(const fs::path& path, const TrainingSet& t,
                        const std::vector<std::string>& parameter_names) {
  std::vector<std::string> header = parameter_names;
  for (Eigen::Index i = 0; i < t.outputs.cols(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "y_%04d", static_cast<int>(i));
    header.emplace_back(buf);
  }
  Eigen::MatrixXd table(t.inputs.rows(), t.inputs.cols() + t.outputs.cols());
  table.leftCols(t.inputs.cols()) = t.inputs;
  table.rightCols(t.outputs.cols()) = t.outputs;
  csv::write(path, header, table);
}

TrainingSet read_training_csv(const fs::path& path, std::vector<std::string>* names_out) {
  const auto table = csv::read(path);
  Eigen::Index d = 0;
  while (d < table.cols() && !table.header[static_cast<std::size_t>(d)].starts_with("y_")) ++d;
  if (d == 0 || d == table.cols()) {
    throw ValidationError("training csv: expected parameter columns followed by y_* columns in " +
                          path.string());
  }
  TrainingSet t;
  t.inputs = table.values.leftCols(d);
  t.outputs = table.values.rightCols(table.cols() - d);
  t.case_id = path.stem().string();
  if (names_out) names_out->assign(table.header.begin(), table.header.begin() + d);
  const auto report = validate_training_set(t);
  if (!report.ok()) {
    throw ValidationError("training csv: " + report.errors.front().field + ": " +
                          report.errors.front().rule);
  }
  return t;
}

struct LoadedCase {
  TransientCase data;
  synthsim::CaseSpec spec;
};

LoadedCase load_case(const fs::path& cases_dir, const std::string& id,
                     const fs::path& cov_dir = {}, bool attach_cov = false) {
  LoadedCase lc;
  lc.spec = synthsim::CaseSpec::load_json(cases_dir / (id + "_spec.json"));
  TimeSeriesGrid bc = read_grid_csv(cases_dir / (id + "_bc.csv"));
  TimeSeriesGrid meas = read_grid_csv(cases_dir / (id + "_meas.csv"));
  lc.data = make_case(id, std::move(bc), std::move(meas));
  if (attach_cov) {
    const fs::path cov_path = (cov_dir.empty() ? cases_dir : cov_dir) / ("cov_" + id + ".csv");
    if (fs::exists(cov_path)) {
      lc.data.covariance = covest::CovarianceModel::load_json(cov_path);
    }
  }
  return lc;
}

struct SuiteInfo {
  std::vector<std::string> train_ids, test_ids, parameter_names;
  Eigen::VectorXd theta_star;
  Eigen::VectorXd hyper_mean, hyper_sd;
};

SuiteInfo load_suite_info(const fs::path& cases_dir) {
  const fs::path path = cases_dir / "suite.json";
  std::ifstream in(path);
  if (!in) throw ValidationError("missing suite.json in " + cases_dir.string());
  json j = json::parse(in);
  SuiteInfo info;
  info.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  info.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  info.parameter_names = j.at("parameter_names").get<std::vector<std::string>>();
  const auto ts = j.at("theta_star").get<std::vector<double>>();
  info.theta_star = Eigen::Map<const Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  const auto hm = j.at("hyper_mean").get<std::vector<double>>();
  info.hyper_mean = Eigen::Map<const Eigen::VectorXd>(hm.data(), static_cast<Eigen::Index>(hm.size()));
  const auto hs = j.at("hyper_sd").get<std::vector<double>>();
  info.hyper_sd = Eigen::Map<const Eigen::VectorXd>(hs.data(), static_cast<Eigen::Index>(hs.size()));
  return info;
}

// RunConfig: shared defaults for the pipeline commands. Every referenced file
// must exist; unknown keys and wrong types are field-level errors.
struct RunConfig {
  json raw = json::object();

  static RunConfig load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("config: " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    static const std::vector<std::string> known = {
        "seed",    "cases_dir",  "surrogates_dir", "cov_dir",  "out_dir",   "backend",
        "cov_mode", "priors",    "sampler",        "split",    "noise",     "variant",
        "chains",  "warmup",     "draws",          "target_accept", "fallback_sigma",
        "theta_draws"};
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ValidationError("config: unknown field '" + key + "'");
      }
    }
    RunConfig c;
    c.raw = std::move(j);
    c.check_type("seed", json::value_t::number_unsigned);
    c.check_type("cases_dir", json::value_t::string);
    c.check_type("surrogates_dir", json::value_t::string);
    c.check_type("cov_dir", json::value_t::string);
    c.check_type("out_dir", json::value_t::string);
    c.check_type("backend", json::value_t::string);
    c.check_type("cov_mode", json::value_t::string);
    c.check_type("sampler", json::value_t::string);
    c.check_type("chains", json::value_t::number_unsigned);
    c.check_type("warmup", json::value_t::number_unsigned);
    c.check_type("draws", json::value_t::number_unsigned);
    for (const char* dir_key : {"cases_dir", "surrogates_dir", "cov_dir"}) {
      if (c.raw.contains(dir_key) && !fs::exists(c.raw[dir_key].get<std::string>())) {
        throw ValidationError("config: " + std::string(dir_key) + " does not exist: " +
                              c.raw[dir_key].get<std::string>());
      }
    }
    return c;
  }

  void check_type(const std::string& key, json::value_t expected) const {
    if (!raw.contains(key)) return;
    const auto& v = raw.at(key);
    const bool numeric_ok = expected == json::value_t::number_unsigned &&
                            (v.is_number_integer() || v.is_number_unsigned());
    if (v.type() != expected && !numeric_ok) {
      throw ValidationError("config: field '" + key + "' has the wrong type");
    }
  }

  template <class T>
  void apply(const std::string& key, T* value) const {
    if (raw.contains(key)) *value = raw.at(key).get<T>();
  }
};

calib::PriorSpec priors_from_json(const json& j) {
  return calib::PriorSpec::from_json_string(j.dump());
}

calib::PriorSpec default_priors(const std::vector<std::string>& names) {
  return calib::PriorSpec::uniform_box(names, 0.0, 5.0);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_doe(int n, const std::string& bounds_text, std::uint64_t seed, const std::string& out,
            const std::string& names_text) {
  const auto bounds = parse_bounds(bounds_text);
  const auto design = doe::lhs_sample(n, bounds, seed);

  std::vector<std::string> header;
  if (!names_text.empty()) {
    header = split_list(names_text);
    if (header.size() != bounds.size()) {
      throw ValidationError("doe: --names count must match --bounds count");
    }
  } else {
    for (std::size_t i = 0; i < bounds.size(); ++i) header.push_back("x" + std::to_string(i + 1));
  }

  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  csv::write(out_path, header, design.points);

  Manifest m;
  m.command = "doe";
  m.seed = seed;
  m.config = {{"n", n}, {"bounds", bounds_text}, {"names", names_text}};
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "doe: wrote " << out_path.string() << " (" << n << " x " << bounds.size() << ")\n";
  return kExitOk;
}

int cmd_simulate_suite(std::uint64_t seed, const std::string& out, const std::string& variant,
                       const std::string& noise_text, const std::string& discrepancy_text) {
  auto suite = synthsim::make_benchmark_suite(seed);
  const auto noise = parse_noise(noise_text);
  const bool heterogeneous = variant == "het";
  if (!heterogeneous && variant != "hom") {
    throw ValidationError("simulate: --variant must be hom or het");
  }

  for (const auto& part : split_list(discrepancy_text)) {
    const auto fields = split_list(part, ':');
    if (fields.size() != 3) {
      throw ValidationError("simulate: --discrepancy wants id:form:magnitude, got '" + part + "'");
    }
    auto& spec = suite.cases[static_cast<std::size_t>(suite.index_of(fields[0]))];
    spec.discrepancy = synthsim::Discrepancy{fields[1], std::stod(fields[2])};
  }

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);

  Manifest m;
  m.command = "simulate";
  m.seed = seed;
  m.config = {{"variant", variant}, {"noise", noise_text}, {"discrepancy", discrepancy_text}};

  for (std::size_t i = 0; i < suite.cases.size(); ++i) {
    const auto& spec = suite.cases[i];
    const Eigen::VectorXd theta = heterogeneous
                                      ? suite.theta_star_groups.row(static_cast<Eigen::Index>(i))
                                            .transpose()
                                      : suite.theta_star;
    const TransientCase c = synthsim::synthesize_observations(
        spec, theta, noise, seed + 1000ULL * (i + 1));
    write_grid_csv(out_dir / (spec.id + "_bc.csv"), c.boundary_conditions);
    write_grid_csv(out_dir / (spec.id + "_meas.csv"), c.measurements);
    spec.save_json(out_dir / (spec.id + "_spec.json"));
    m.add_output(out_dir / (spec.id + "_meas.csv"));
  }

  json sj;
  sj["type"] = "suite";
  sj["train_ids"] = suite.train_ids;
  sj["test_ids"] = suite.test_ids;
  sj["parameter_names"] = synthsim::parameter_names();
  sj["variant"] = variant;
  sj["noise"] = noise_text;
  sj["theta_star"] = std::vector<double>(suite.theta_star.data(),
                                         suite.theta_star.data() + suite.theta_star.size());
  sj["hyper_mean"] = std::vector<double>(suite.hyper_mean.data(),
                                         suite.hyper_mean.data() + suite.hyper_mean.size());
  sj["hyper_sd"] = std::vector<double>(suite.hyper_sd.data(),
                                       suite.hyper_sd.data() + suite.hyper_sd.size());
  std::vector<std::vector<double>> groups;
  for (Eigen::Index g = 0; g < suite.theta_star_groups.rows(); ++g) {
    groups.emplace_back(suite.theta_star_groups.row(g).begin(),
                        suite.theta_star_groups.row(g).end());
  }
  sj["theta_star_groups"] = groups;
  std::ofstream sf(out_dir / "suite.json", std::ios::binary);
  sf << sj.dump(2) << '\n';
  m.add_output(out_dir / "suite.json");

  m.write(out_dir / "manifest.json");
  std::cout << "simulate: wrote " << suite.cases.size() << " cases to " << out_dir.string()
            << '\n';
  return kExitOk;
}

int cmd_simulate_design(const std::string& design_path, const std::string& case_path,
                        const std::string& out) {
  const fs::path design_file(design_path);
  const fs::path case_file(case_path);
  const auto spec = synthsim::CaseSpec::load_json(case_file);
  const auto design = csv::read(design_file);
  if (design.cols() != synthsim::kParameterCount) {
    throw ValidationError("simulate: design must have " +
                          std::to_string(synthsim::kParameterCount) + " columns");
  }

  TrainingSet t = surrogate::run_design(
      [&spec](const Eigen::VectorXd& theta) { return synthsim::simulate_flat(theta, spec); },
      design.values, spec.id);

  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_training_csv(out_path, t, synthsim::parameter_names());

  Manifest m;
  m.command = "simulate";
  m.config = {{"design", design_path}, {"case", case_path}};
  m.add_input(design_file);
  m.add_input(case_file);
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "simulate: wrote " << out_path.string() << " (" << t.inputs.rows() << " runs)\n";
  return kExitOk;
}

int cmd_train_surrogate(const std::string& backend_text, const std::string& train_path,
                        const std::string& val_path, const std::string& out, double evr,
                        int restarts, const std::string& hidden_text, int epochs,
                        double learning_rate, std::uint64_t seed) {
  const auto backend = surrogate::backend_from_name(backend_text);
  TrainingSet training = read_training_csv(train_path, nullptr);
  TrainingSet validation;
  if (!val_path.empty()) validation = read_training_csv(val_path, nullptr);

  surrogate::Surrogate model;
  if (backend == surrogate::Backend::gp_pca) {
    surrogate::GpPcaConfig config;
    config.evr_threshold = evr;
    config.gp.restarts = restarts;
    config.gp.seed = seed;
    model = surrogate::train_gp_pca(training, config);
  } else {
    surrogate::MlpConfig config;
    config.hidden.clear();
    for (const auto& h : split_list(hidden_text)) config.hidden.push_back(std::stol(h));
    config.train.max_epochs = epochs;
    config.train.learning_rate = learning_rate;
    config.train.seed = seed;
    model = surrogate::train_mlp(training, validation, config);
  }

  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  model.save_json(out_path);

  Manifest m;
  m.command = "train-surrogate";
  m.seed = seed;
  m.config = {{"backend", backend_text}, {"train", train_path}, {"val", val_path},
              {"evr", evr},             {"restarts", restarts}, {"hidden", hidden_text},
              {"epochs", epochs},       {"learning_rate", learning_rate}};
  m.add_input(train_path);
  if (!val_path.empty()) m.add_input(val_path);
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "train-surrogate: wrote " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_validate_surrogate(const std::string& models_text, const std::string& case_path,
                           bool study, const std::string& sizes_text,
                           const std::string& backends_text, int test_size, std::uint64_t seed,
                           const std::string& out) {
  const auto spec = synthsim::CaseSpec::load_json(case_path);
  const surrogate::SimulatorFn simulate = [&spec](const Eigen::VectorXd& theta) {
    return synthsim::simulate_flat(theta, spec);
  };
  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

  Manifest m;
  m.command = "validate-surrogate";
  m.seed = seed;
  m.add_input(case_path);

  if (study) {
    surrogate::StudyConfig config;
    for (const auto& s : split_list(sizes_text)) config.sample_sizes.push_back(std::stoi(s));
    config.backends.clear();
    for (const auto& b : split_list(backends_text)) {
      config.backends.push_back(surrogate::backend_from_name(b));
    }
    config.test_size = test_size;
    config.seed = seed;
    const auto report = surrogate::convergence_study(simulate, {{0.0, 5.0}, {0.0, 5.0},
                                                                {0.0, 5.0}, {0.0, 5.0}}, config);
    report.save_csv(out_path);
    m.config = {{"study", true}, {"sizes", sizes_text}, {"backends", backends_text},
                {"test_size", test_size}, {"case", case_path}};
  } else {
    // Hold-out evaluation of existing model files.
    Rng rng(seed, 0xFEED);
    Eigen::MatrixXd test_points(test_size, synthsim::kParameterCount);
    for (int i = 0; i < test_size; ++i) {
      for (Eigen::Index j = 0; j < synthsim::kParameterCount; ++j) {
        test_points(i, j) = rng.uniform(0.0, 5.0);
      }
    }
    const TrainingSet test_set = surrogate::run_design(simulate, test_points, spec.id);

    const auto model_paths = split_list(models_text);
    if (model_paths.empty()) throw ValidationError("validate-surrogate: no models given");
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(model_paths.size()), 2);
    std::ofstream listing(out_path.string() + ".models.txt", std::ios::binary);
    for (std::size_t i = 0; i < model_paths.size(); ++i) {
      const auto model = surrogate::Surrogate::load_json(model_paths[i]);
      double abs_sum = 0.0;
      for (Eigen::Index r = 0; r < test_set.inputs.rows(); ++r) {
        abs_sum += (surrogate::predict(model, test_set.inputs.row(r).transpose()) -
                    test_set.outputs.row(r).transpose()).cwiseAbs().sum();
      }
      rows(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
      rows(static_cast<Eigen::Index>(i), 1) =
          abs_sum / static_cast<double>(test_set.outputs.size());
      listing << i << ' ' << model_paths[i] << '\n';
      m.add_input(model_paths[i]);
    }
    csv::write(out_path, {"model", "mae"}, rows);
    m.config = {{"models", models_text}, {"test_size", test_size}, {"case", case_path}};
  }
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "validate-surrogate: wrote " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_estimate_cov(const std::string& case_path, int members, std::uint64_t seed,
                     const std::string& theta_text, double bc_scale_sd, double bc_shift_sd,
                     const std::string& nugget_text, const std::string& mode_text,
                     bool cross_location, const std::string& out) {
  const auto spec = synthsim::CaseSpec::load_json(case_path);
  const Eigen::VectorXd theta = theta_text.empty()
                                    ? Eigen::VectorXd::Ones(synthsim::kParameterCount)
                                    : parse_vector(theta_text);

  synthsim::BcDistributions bc;
  bc.pressure = {bc_scale_sd, bc_shift_sd};
  bc.flow = {bc_scale_sd, bc_shift_sd};
  bc.power = {bc_scale_sd, bc_shift_sd};
  bc.inlet_temperature = {bc_scale_sd, bc_shift_sd};

  std::vector<std::string> warnings;
  const auto ensemble = covest::propagate_bc_uncertainty(
      synthsim::make_bc_member_simulator(spec, bc, theta), members, seed, spec.id, &warnings);

  // Per-location block-diagonal assembly is the default; cross-location
  // covariance is never exhibited by the data this mimics.
  const Eigen::MatrixXd sigma =
      cross_location ? covest::estimate_cov(ensemble)
                     : covest::estimate_blockdiag_cov(ensemble, 3, spec.steps);
  const double nugget =
      nugget_text == "auto" ? covest::default_nugget(sigma) : std::stod(nugget_text);
  const auto mode = mode_text == "diag" ? covest::CovMode::diagonal : covest::CovMode::full;
  const auto model = covest::regularize_cov(sigma, nugget, mode, spec.id);

  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  model.save_json(out_path);

  Manifest m;
  m.command = "estimate-cov";
  m.seed = seed;
  m.config = {{"case", case_path},       {"members", members},
              {"theta", theta_text},     {"bc_scale_sd", bc_scale_sd},
              {"bc_shift_sd", bc_shift_sd}, {"nugget", nugget_text},
              {"mode", mode_text},       {"cross_location", cross_location},
              {"warnings", warnings}};
  m.add_input(case_path);
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "estimate-cov: wrote " << out_path.string() << " (nugget "
            << format_double(model.nugget) << ")\n";
  return kExitOk;
}

int cmd_calibrate(const std::string& mode, const std::string& cases_dir_text,
                  const std::string& surrogates_dir_text, const std::string& cov_dir_text,
                  const std::string& cov_mode_text, const std::string& ids_text,
                  const std::string& priors_path, const std::string& sampler_text, int chains,
                  int warmup, int draws, double target_accept, double fallback_sigma,
                  std::uint64_t seed, const std::string& out) {
  const fs::path cases_dir(cases_dir_text);
  const fs::path surrogates_dir(surrogates_dir_text);
  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);

  calib::TargetOptions options;
  options.cov_mode = cov_mode_text == "diag" ? covest::CovMode::diagonal : covest::CovMode::full;
  options.fallback_sigma = fallback_sigma;

  std::vector<std::string> ids = split_list(ids_text);
  std::vector<std::string> parameter_names = synthsim::parameter_names();
  if (ids.empty()) {
    const auto suite = load_suite_info(cases_dir);
    ids = suite.train_ids;
    parameter_names = suite.parameter_names;
  }

  calib::PriorSpec priors = default_priors(parameter_names);
  if (!priors_path.empty()) {
    std::ifstream in(priors_path);
    if (!in) throw ValidationError("calibrate: cannot open priors " + priors_path);
    priors = priors_from_json(json::parse(in));
  }

  Manifest m;
  m.command = "calibrate";
  m.seed = seed;
  m.config = {{"mode", mode},           {"cov", cov_mode_text}, {"ids", ids},
              {"sampler", sampler_text}, {"chains", chains},    {"warmup", warmup},
              {"draws", draws},          {"target_accept", target_accept},
              {"fallback_sigma", fallback_sigma}};

  // Load cases and their surrogates.
  std::vector<LoadedCase> loaded;
  std::vector<surrogate::Surrogate> models;
  const bool want_cov = options.cov_mode == covest::CovMode::full;
  for (const auto& id : ids) {
    loaded.push_back(load_case(cases_dir, id,
                               cov_dir_text.empty() ? fs::path() : fs::path(cov_dir_text),
                               /*attach_cov=*/true));
    const fs::path meas = cases_dir / (id + "_meas.csv");
    m.add_input(meas);
    if (want_cov && !loaded.back().data.covariance.has_value()) {
      throw ValidationError("calibrate: cov full requested but no covariance for case " + id);
    }
    fs::path model_path;
    for (const auto& entry : fs::directory_iterator(surrogates_dir)) {
      if (entry.path().filename().string().starts_with(id + "_") &&
          entry.path().extension() == ".json" &&
          entry.path().filename().string().find("manifest") == std::string::npos) {
        model_path = entry.path();
        break;
      }
    }
    if (model_path.empty()) {
      throw ValidationError("calibrate: no surrogate found for case " + id + " in " +
                            surrogates_dir.string());
    }
    models.push_back(surrogate::Surrogate::load_json(model_path));
    m.add_input(model_path);
  }

  sampler::NutsConfig nuts_config;
  nuts_config.target_accept = target_accept;

  auto sample_target = [&](const sampler::TargetDensity& target, std::uint64_t run_seed) {
    std::string choice = sampler_text;
    if (choice == "auto") choice = target.has_gradient() ? "nuts" : "rwm";
    if (choice == "nuts") {
      return sampler::nuts_sample(target, chains, warmup, draws, run_seed, nuts_config);
    }
    if (choice == "rwm") {
      return sampler::rwm_sample(target, chains, warmup, draws, run_seed);
    }
    throw ValidationError("calibrate: unknown sampler '" + sampler_text + "'");
  };

  if (mode == "single") {
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      const auto target =
          calib::build_single_level_target(models[i], loaded[i].data, options, priors);
      const auto result = sample_target(target, seed + 131ULL * i);
      sampler::save_chains(out_dir / loaded[i].data.id, result);
      m.add_output(out_dir / loaded[i].data.id / "diagnostics.json");
    }
  } else if (mode == "hier") {
    std::vector<const surrogate::Surrogate*> model_ptrs;
    std::vector<const TransientCase*> case_ptrs;
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      model_ptrs.push_back(&models[i]);
      case_ptrs.push_back(&loaded[i].data);
    }
    const auto target =
        calib::build_hierarchical_target(model_ptrs, case_ptrs, options, priors);
    const auto result = sample_target(target, seed);
    sampler::save_chains(out_dir / "hier", result);
    m.add_output(out_dir / "hier" / "diagnostics.json");
  } else {
    throw ValidationError("calibrate: --mode must be single or hier");
  }

  m.write(out_dir / "manifest.json");
  std::cout << "calibrate: wrote chains to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_diagnose(const std::string& chains_dir, const std::string& out) {
  const auto chains = sampler::load_chains(chains_dir);
  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

  json j;
  j["type"] = "diagnose";
  j["chains"] = chains.size();
  j["draws_per_chain"] = chains.front().draws.rows();
  const Eigen::MatrixXd pooled = sampler::pooled_draws(chains);
  json params = json::array();
  Eigen::VectorXd rhat_values, ess_values;
  const bool have_diag = chains.size() >= 2 && chains.front().draws.rows() >= 4;
  if (have_diag) {
    rhat_values = sampler::rhat(chains);
    ess_values = sampler::ess(chains);
  }
  for (std::size_t p = 0; p < chains.front().names.size(); ++p) {
    const auto col = pooled.col(static_cast<Eigen::Index>(p));
    std::vector<double> values(col.data(), col.data() + col.size());
    json pj;
    pj["name"] = chains.front().names[p];
    pj["mean"] = mean(values);
    pj["sd"] = sample_sd(values);
    pj["q025"] = quantile(values, 0.025);
    pj["q50"] = quantile(values, 0.5);
    pj["q975"] = quantile(values, 0.975);
    if (have_diag) {
      const double r = rhat_values(static_cast<Eigen::Index>(p));
      const double e = ess_values(static_cast<Eigen::Index>(p));
      if (std::isnan(r)) pj["rhat"] = nullptr; else pj["rhat"] = r;
      if (std::isnan(e)) pj["ess"] = nullptr; else pj["ess"] = e;
    }
    params.push_back(std::move(pj));
  }
  j["parameters"] = std::move(params);
  int divergences = 0;
  for (const auto& c : chains) divergences += c.divergences;
  j["divergences"] = divergences;

  std::ofstream outf(out_path, std::ios::binary);
  if (!outf) throw ValidationError("diagnose: cannot write " + out_path.string());
  outf << j.dump(2) << '\n';

  Manifest m;
  m.command = "diagnose";
  m.config = {{"chains", chains_dir}};
  m.add_input(fs::path(chains_dir) / "diagnostics.json");
  m.add_output(out_path);
  m.write(out_path.string() + ".manifest.json");
  std::cout << "diagnose: wrote " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_validate_posterior(const std::string& chains_dir_text, const std::string& cases_dir_text,
                           const std::string& surrogates_dir_text, const std::string& source_text,
                           const std::string& theta_text, const std::string& predictor,
                           int theta_draws, std::uint64_t seed, const std::string& out) {
  const fs::path cases_dir(cases_dir_text);
  const auto suite = load_suite_info(cases_dir);
  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);

  calib::ThetaSource source;
  if (source_text == "point") {
    source = calib::ThetaSource::from_point(parse_vector(theta_text));
  } else if (source_text == "chains") {
    const auto chains = sampler::load_chains(chains_dir_text);
    source = calib::ThetaSource::from_draws(sampler::pooled_draws(chains));
  } else if (source_text == "predictive") {
    const auto chains = sampler::load_chains(chains_dir_text);
    const auto summary = calib::summarize_hyper(chains, suite.parameter_names,
                                                /*override_diagnostics=*/true);
    source = calib::ThetaSource::from_predictive(summary.predictive_mean, summary.predictive_sd);
  } else {
    throw ValidationError("validate-posterior: --source must be point, chains, or predictive");
  }

  std::vector<LoadedCase> loaded;
  std::vector<calib::ValidationCase> vcases;
  std::vector<surrogate::Surrogate> models;
  auto add_cases = [&](const std::vector<std::string>& ids, bool is_test) {
    for (const auto& id : ids) {
      loaded.push_back(load_case(cases_dir, id));
      calib::ValidationCase vc;
      vc.is_test = is_test;
      if (predictor == "surrogate") {
        fs::path model_path;
        for (const auto& entry : fs::directory_iterator(surrogates_dir_text)) {
          if (entry.path().filename().string().starts_with(id + "_") &&
              entry.path().extension() == ".json") {
            model_path = entry.path();
            break;
          }
        }
        if (model_path.empty()) {
          throw ValidationError("validate-posterior: no surrogate for case " + id);
        }
        models.push_back(surrogate::Surrogate::load_json(model_path));
        const auto* model = &models.back();
        vc.predict = [model](const Eigen::VectorXd& theta) {
          return surrogate::predict(*model, theta);
        };
      }
      vcases.push_back(std::move(vc));
    }
  };
  add_cases(suite.train_ids, false);
  add_cases(suite.test_ids, true);
  // Pointers resolve after both vectors stop reallocating.
  for (std::size_t i = 0; i < vcases.size(); ++i) {
    vcases[i].observed = &loaded[i].data;
    if (!vcases[i].predict) {
      const auto spec = loaded[i].spec;
      vcases[i].predict = [spec](const Eigen::VectorXd& theta) {
        return synthsim::simulate_flat(theta, spec);
      };
    }
  }

  const auto report = calib::validate_posterior(source, vcases, theta_draws, seed);
  report.save_csv(out_dir / "validation_report.csv");

  Manifest m;
  m.command = "validate-posterior";
  m.seed = seed;
  m.config = {{"source", source_text},   {"predictor", predictor},
              {"theta_draws", theta_draws}, {"chains", chains_dir_text},
              {"cases", cases_dir_text}};
  m.add_output(out_dir / "validation_report.csv");
  m.write(out_dir / "manifest.json");
  std::cout << "validate-posterior: wrote " << (out_dir / "validation_report.csv").string()
            << '\n';
  return kExitOk;
}

int cmd_report(const std::string& artifacts, const std::string& out) {
  const fs::path out_dir = resolve_out(out);
  const auto result = report::render(artifacts, out_dir);
  Manifest m;
  m.command = "report";
  m.config = {{"artifacts", artifacts}, {"missing", result.missing}};
  for (const auto& f : result.written) m.add_output(out_dir / f);
  m.write(out_dir / "manifest.json");
  std::cout << "report: wrote " << result.written.size() << " files to " << out_dir.string();
  if (!result.missing.empty()) {
    std::cout << " (missing artifacts:";
    for (const auto& kind : result.missing) std::cout << ' ' << kind;
    std::cout << ')';
  }
  std::cout << '\n';
  return kExitOk;
}

}  // namespace

std::string version() { return "iuq 0.1.0"; }

int run(std::vector<std::string> args) {
  CLI::App app{"Inverse uncertainty quantification for time-dependent simulations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration with shared defaults");

  // doe -----------------------------------------------------------------
  auto* doe_cmd = app.add_subcommand("doe", "Latin hypercube design");
  int doe_n = 0;
  std::string doe_bounds = "0:5,0:5,0:5,0:5";
  std::uint64_t doe_seed = 0;
  std::string doe_out = "design.csv";
  std::string doe_names;
  doe_cmd->add_option("--n", doe_n, "Number of design points")->required();
  doe_cmd->add_option("--bounds", doe_bounds, "Per-dimension low:high, comma separated");
  doe_cmd->add_option("--seed", doe_seed, "RNG seed");
  doe_cmd->add_option("--out", doe_out, "Output CSV");
  doe_cmd->add_option("--names", doe_names, "Column names, comma separated");

  // simulate -------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Run the synthetic transient simulator");
  bool sim_suite = false;
  std::uint64_t sim_seed = 0;
  std::string sim_out = "cases";
  std::string sim_variant = "hom";
  std::string sim_noise = "iid:0.02";
  std::string sim_discrepancy;
  std::string sim_design, sim_case;
  sim_cmd->add_flag("--suite", sim_suite, "Generate the 9-case benchmark suite");
  sim_cmd->add_option("--seed", sim_seed, "RNG seed");
  sim_cmd->add_option("--out", sim_out, "Output directory (suite) or CSV (design mode)");
  sim_cmd->add_option("--variant", sim_variant, "hom | het ground-truth variant");
  sim_cmd->add_option("--noise", sim_noise, "iid:<sd> or ar1:<rho>:<sd>");
  sim_cmd->add_option("--discrepancy", sim_discrepancy, "id:form:magnitude, comma separated");
  sim_cmd->add_option("--design", sim_design, "Design CSV to run through the simulator");
  sim_cmd->add_option("--case", sim_case, "Case spec JSON for design mode");

  // train-surrogate --------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train-surrogate", "Fit a gp-pca or mlp surrogate");
  std::string tr_backend = "gp-pca", tr_train, tr_val, tr_out = "model.json";
  double tr_evr = 0.999;
  int tr_restarts = 10;
  std::string tr_hidden = "32,32";
  int tr_epochs = 2000;
  double tr_lr = 2e-3;
  std::uint64_t tr_seed = 0;
  train_cmd->add_option("--backend", tr_backend, "gp-pca | mlp")->required();
  train_cmd->add_option("--train", tr_train, "Training CSV")->required();
  train_cmd->add_option("--val", tr_val, "Validation CSV (mlp early stopping)");
  train_cmd->add_option("--out", tr_out, "Output model JSON");
  train_cmd->add_option("--evr", tr_evr, "Explained-variance threshold (gp-pca)");
  train_cmd->add_option("--restarts", tr_restarts, "LML restarts per GP");
  train_cmd->add_option("--hidden", tr_hidden, "Hidden layer sizes (mlp)");
  train_cmd->add_option("--epochs", tr_epochs, "Max training epochs (mlp)");
  train_cmd->add_option("--learning-rate", tr_lr, "Learning rate (mlp)");
  train_cmd->add_option("--seed", tr_seed, "RNG seed");

  // validate-surrogate ------------------------------------------------------
  auto* vs_cmd = app.add_subcommand("validate-surrogate", "Hold-out accuracy / convergence study");
  std::string vs_models, vs_case, vs_sizes = "50,100,200,400", vs_backends = "gp-pca,mlp";
  bool vs_study = false;
  int vs_test_size = 50;
  std::uint64_t vs_seed = 0;
  std::string vs_out = "surrogate_report.csv";
  vs_cmd->add_option("--models", vs_models, "Model JSONs, comma separated");
  vs_cmd->add_option("--case", vs_case, "Case spec JSON")->required();
  vs_cmd->add_flag("--study", vs_study, "Run the sample-size convergence study");
  vs_cmd->add_option("--sizes", vs_sizes, "Training sizes for the study");
  vs_cmd->add_option("--backends", vs_backends, "Backends for the study");
  vs_cmd->add_option("--test-size", vs_test_size, "Held-out simulator runs");
  vs_cmd->add_option("--seed", vs_seed, "RNG seed");
  vs_cmd->add_option("--out", vs_out, "Output CSV");

  // estimate-cov -------------------------------------------------------------
  auto* cov_cmd = app.add_subcommand("estimate-cov", "Observation covariance from a BC ensemble");
  std::string cov_case, cov_theta, cov_nugget = "auto", cov_mode = "full";
  int cov_members = 200;
  std::uint64_t cov_seed = 0;
  double cov_scale_sd = 0.01, cov_shift_sd = 0.0;
  bool cov_cross = false;
  std::string cov_out = "cov.csv";
  cov_cmd->add_option("--case", cov_case, "Case spec JSON")->required();
  cov_cmd->add_option("--members", cov_members, "Ensemble members");
  cov_cmd->add_option("--seed", cov_seed, "RNG seed");
  cov_cmd->add_option("--theta", cov_theta, "Nominal parameters (default all ones)");
  cov_cmd->add_option("--bc-scale-sd", cov_scale_sd, "Relative sd of channel level factors");
  cov_cmd->add_option("--bc-shift-sd", cov_shift_sd, "Sd of ramp time shifts [s]");
  cov_cmd->add_option("--nugget", cov_nugget, "'auto' or explicit variance");
  cov_cmd->add_option("--mode", cov_mode, "full | diag");
  cov_cmd->add_flag("--cross-location", cov_cross, "Keep cross-location covariance");
  cov_cmd->add_option("--out", cov_out, "Output CSV (JSON sidecar is added)");

  // calibrate -----------------------------------------------------------------
  auto* cal_cmd = app.add_subcommand("calibrate", "Sample single-level or hierarchical posterior");
  std::string cal_mode = "single", cal_cases, cal_surrogates, cal_cov_dir, cal_cov = "diag";
  std::string cal_ids, cal_priors, cal_sampler = "auto", cal_out = "chains";
  int cal_chains = 2, cal_warmup = 1000, cal_draws = 1000;
  double cal_accept = 0.8, cal_fallback_sigma = 0.02;
  std::uint64_t cal_seed = 0;
  cal_cmd->add_option("--mode", cal_mode, "single | hier");
  cal_cmd->add_option("--cases", cal_cases, "Cases directory")->required();
  cal_cmd->add_option("--surrogates", cal_surrogates, "Surrogates directory")->required();
  cal_cmd->add_option("--cov-dir", cal_cov_dir, "Covariance directory (default: cases dir)");
  cal_cmd->add_option("--cov", cal_cov, "full | diag");
  cal_cmd->add_option("--ids", cal_ids, "Case ids (default: suite train split)");
  cal_cmd->add_option("--priors", cal_priors, "Priors JSON (default uniform(0,5))");
  cal_cmd->add_option("--sampler", cal_sampler, "nuts | rwm | auto");
  cal_cmd->add_option("--chains", cal_chains, "Chains");
  cal_cmd->add_option("--warmup", cal_warmup, "Warmup iterations");
  cal_cmd->add_option("--draws", cal_draws, "Post-warmup draws");
  cal_cmd->add_option("--target-accept", cal_accept, "Dual-averaging target");
  cal_cmd->add_option("--fallback-sigma", cal_fallback_sigma,
                      "iid observation sd when no covariance model exists");
  cal_cmd->add_option("--seed", cal_seed, "RNG seed");
  cal_cmd->add_option("--out", cal_out, "Output chains directory");

  // diagnose -----------------------------------------------------------------
  auto* diag_cmd = app.add_subcommand("diagnose", "Convergence diagnostics for saved chains");
  std::string diag_chains, diag_out = "diagnose.json";
  diag_cmd->add_option("--chains", diag_chains, "Chain run directory")->required();
  diag_cmd->add_option("--out", diag_out, "Output JSON");

  // validate-posterior ---------------------------------------------------------
  auto* vp_cmd = app.add_subcommand("validate-posterior", "Train/test error distributions");
  std::string vp_chains, vp_cases, vp_surrogates, vp_source = "chains", vp_theta;
  std::string vp_predictor = "simulator", vp_out = "validation";
  int vp_draws = 200;
  std::uint64_t vp_seed = 0;
  vp_cmd->add_option("--chains", vp_chains, "Chain run directory (chains/predictive source)");
  vp_cmd->add_option("--cases", vp_cases, "Cases directory with suite.json")->required();
  vp_cmd->add_option("--surrogates", vp_surrogates, "Surrogates directory");
  vp_cmd->add_option("--source", vp_source, "point | chains | predictive");
  vp_cmd->add_option("--theta", vp_theta, "Point source parameters");
  vp_cmd->add_option("--predictor", vp_predictor, "simulator | surrogate");
  vp_cmd->add_option("--draws", vp_draws, "Parameter draws for distributional sources");
  vp_cmd->add_option("--seed", vp_seed, "RNG seed");
  vp_cmd->add_option("--out", vp_out, "Output directory");

  // report --------------------------------------------------------------------
  auto* rep_cmd = app.add_subcommand("report", "Render figures from pipeline artifacts");
  std::string rep_artifacts, rep_out = "report";
  rep_cmd->add_option("--artifacts", rep_artifacts, "Artifacts directory")->required();
  rep_cmd->add_option("--out", rep_out, "Report output directory");

  std::vector<const char*> argv;
  argv.push_back("iuq");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    std::cout << version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    // Config file supplies defaults; explicit flags already took precedence
    // because CLI11 only leaves defaults untouched.
    if (!config_path.empty()) {
      const RunConfig config = RunConfig::load(config_path);
      config.apply("seed", &cal_seed);
      config.apply("seed", &vp_seed);
      config.apply("cases_dir", &cal_cases);
      config.apply("cases_dir", &vp_cases);
      config.apply("surrogates_dir", &cal_surrogates);
      config.apply("surrogates_dir", &vp_surrogates);
      config.apply("cov_dir", &cal_cov_dir);
      config.apply("cov_mode", &cal_cov);
      config.apply("sampler", &cal_sampler);
      config.apply("chains", &cal_chains);
      config.apply("warmup", &cal_warmup);
      config.apply("draws", &cal_draws);
      config.apply("fallback_sigma", &cal_fallback_sigma);
      config.apply("theta_draws", &vp_draws);
      if (config.raw.contains("priors")) {
        // Inline prior spec: validated on use.
        std::ofstream tmp(".iuq_inline_priors.json", std::ios::binary);
        tmp << config.raw["priors"].dump(2);
        cal_priors = ".iuq_inline_priors.json";
      }
    }

    if (doe_cmd->parsed()) return cmd_doe(doe_n, doe_bounds, doe_seed, doe_out, doe_names);
    if (sim_cmd->parsed()) {
      if (sim_suite) {
        return cmd_simulate_suite(sim_seed, sim_out, sim_variant, sim_noise, sim_discrepancy);
      }
      if (sim_design.empty() || sim_case.empty()) {
        throw ValidationError("simulate: need --suite, or --design with --case");
      }
      return cmd_simulate_design(sim_design, sim_case, sim_out);
    }
    if (train_cmd->parsed()) {
      return cmd_train_surrogate(tr_backend, tr_train, tr_val, tr_out, tr_evr, tr_restarts,
                                 tr_hidden, tr_epochs, tr_lr, tr_seed);
    }
    if (vs_cmd->parsed()) {
      return cmd_validate_surrogate(vs_models, vs_case, vs_study, vs_sizes, vs_backends,
                                    vs_test_size, vs_seed, vs_out);
    }
    if (cov_cmd->parsed()) {
      return cmd_estimate_cov(cov_case, cov_members, cov_seed, cov_theta, cov_scale_sd,
                              cov_shift_sd, cov_nugget, cov_mode, cov_cross, cov_out);
    }
    if (cal_cmd->parsed()) {
      return cmd_calibrate(cal_mode, cal_cases, cal_surrogates, cal_cov_dir, cal_cov, cal_ids,
                           cal_priors, cal_sampler, cal_chains, cal_warmup, cal_draws, cal_accept,
                           cal_fallback_sigma, cal_seed, cal_out);
    }
    if (diag_cmd->parsed()) return cmd_diagnose(diag_chains, diag_out);
    if (vp_cmd->parsed()) {
      return cmd_validate_posterior(vp_chains, vp_cases, vp_surrogates, vp_source, vp_theta,
                                    vp_predictor, vp_draws, vp_seed, vp_out);
    }
    if (rep_cmd->parsed()) return cmd_report(rep_artifacts, rep_out);
    throw ValidationError("no command given");
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid argument: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace iuq::cli
