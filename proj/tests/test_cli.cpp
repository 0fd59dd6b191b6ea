#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "iuq/cli.hpp"
#include "iuq/csv.hpp"
#include "iuq/report.hpp"
#include "iuq/sampler.hpp"
#include "iuq/svg.hpp"

using namespace iuq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub) const { return (path / sub).string(); }
};

// Minimal XML well-formedness check: every opened tag closes in order.
bool well_formed_xml(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return false;
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const auto end = text.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;  // self-closing
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      const auto space = tag.find_first_of(" \t\n");
      stack.push_back(space == std::string::npos ? tag : tag.substr(0, space));
    }
  }
  return stack.empty();
}

int run(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("doe command writes the design and a manifest") {
  TempDir tmp("iuq_cli_doe");
  const auto out = tmp.str("design.csv");
  CHECK(run({"doe", "--n", "10", "--bounds", "0:5,0:5,0:5,0:5", "--seed", "1", "--out", out}) ==
        cli::kExitOk);
  const auto table = csv::read(out);
  CHECK(table.rows() == 10);
  CHECK(table.cols() == 4);
  CHECK(fs::exists(out + ".manifest.json"));

  // Same seed, same bytes.
  const auto out2 = tmp.str("design2.csv");
  CHECK(run({"doe", "--n", "10", "--bounds", "0:5,0:5,0:5,0:5", "--seed", "1", "--out", out2}) ==
        cli::kExitOk);
  std::ifstream a(out), b(out2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("usage errors exit with 64") {
  CHECK(run({"unknown-command"}) == cli::kExitUsage);
  CHECK(run({}) == cli::kExitUsage);
  CHECK(run({"doe"}) == cli::kExitUsage);  // missing required --n
}

TEST_CASE("validation errors exit with 1") {
  TempDir tmp("iuq_cli_err");
  CHECK(run({"doe", "--n", "10", "--bounds", "5:0", "--out", tmp.str("x.csv")}) ==
        cli::kExitValidation);
  // Malformed config file: field-level message, exit 1.
  const auto config = tmp.str("config.json");
  {
    std::ofstream out(config);
    out << "{\"unknown_field\": 1}";
  }
  CHECK(run({"--config", config, "doe", "--n", "5", "--out", tmp.str("y.csv")}) ==
        cli::kExitValidation);
  {
    std::ofstream out(config);
    out << "{\"cases_dir\": 42}";
  }
  CHECK(run({"--config", config, "doe", "--n", "5", "--out", tmp.str("y.csv")}) ==
        cli::kExitValidation);
}

TEST_CASE("simulate suite and design modes") {
  TempDir tmp("iuq_cli_sim");
  CHECK(run({"simulate", "--suite", "--seed", "3", "--out", tmp.str("cases"), "--variant", "het",
             "--noise", "ar1:0.8:0.02", "--discrepancy", "A-FR:tail_bump:0.08"}) == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "cases" / "suite.json"));
  CHECK(fs::exists(tmp.path / "cases" / "C-TI_meas.csv"));
  CHECK(fs::exists(tmp.path / "cases" / "manifest.json"));

  CHECK(run({"doe", "--n", "30", "--bounds", "0:5,0:5,0:5,0:5", "--seed", "5", "--out",
             tmp.str("design.csv")}) == cli::kExitOk);
  CHECK(run({"simulate", "--design", tmp.str("design.csv"), "--case",
             tmp.str("cases/A-FR_spec.json"), "--out", tmp.str("train.csv")}) == cli::kExitOk);
  const auto table = csv::read(tmp.str("train.csv"));
  CHECK(table.rows() == 30);
  CHECK(table.cols() == 4 + 120);
  CHECK(table.header[0] == "gain");
  CHECK(table.header[4] == "y_0000");
}

TEST_CASE("full mini pipeline: train, estimate-cov, calibrate, diagnose, validate, report") {
  TempDir tmp("iuq_cli_pipe");
  REQUIRE(run({"simulate", "--suite", "--seed", "3", "--out", tmp.str("cases"), "--variant",
               "hom", "--noise", "iid:0.02"}) == cli::kExitOk);
  REQUIRE(run({"doe", "--n", "120", "--bounds", "0:5,0:5,0:5,0:5", "--seed", "5", "--out",
               tmp.str("design.csv")}) == cli::kExitOk);
  REQUIRE(run({"simulate", "--design", tmp.str("design.csv"), "--case",
               tmp.str("cases/A-FR_spec.json"), "--out", tmp.str("train_A-FR.csv")}) ==
          cli::kExitOk);

  // Fast MLP surrogate for the pipeline smoke test.
  REQUIRE(run({"train-surrogate", "--backend", "mlp", "--train", tmp.str("train_A-FR.csv"),
               "--out", tmp.str("surrogates/A-FR_mlp.json"), "--epochs", "250", "--seed", "7"}) ==
          cli::kExitOk);
  CHECK(fs::exists(tmp.path / "surrogates" / "A-FR_mlp.json"));

  REQUIRE(run({"estimate-cov", "--case", tmp.str("cases/A-FR_spec.json"), "--members", "60",
               "--seed", "9", "--bc-scale-sd", "0.01", "--out",
               tmp.str("cov/cov_A-FR.csv")}) == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "cov" / "cov_A-FR.csv"));
  CHECK(fs::exists(tmp.path / "cov" / "cov_A-FR.csv.json"));

  REQUIRE(run({"calibrate", "--mode", "single", "--cases", tmp.str("cases"), "--surrogates",
               tmp.str("surrogates"), "--cov-dir", tmp.str("cov"), "--cov", "full", "--ids",
               "A-FR", "--chains", "2", "--warmup", "200", "--draws", "200", "--seed", "11",
               "--out", tmp.str("chains")}) == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "chains" / "A-FR" / "chain_0.csv"));
  CHECK(fs::exists(tmp.path / "chains" / "A-FR" / "diagnostics.json"));

  REQUIRE(run({"diagnose", "--chains", tmp.str("chains/A-FR"), "--out",
               tmp.str("diagnose.json")}) == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "diagnose.json"));

  REQUIRE(run({"validate-posterior", "--chains", tmp.str("chains/A-FR"), "--cases",
               tmp.str("cases"), "--source", "chains", "--draws", "40", "--seed", "13", "--out",
               tmp.str("validation")}) == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "validation" / "validation_report.csv"));

  REQUIRE(run({"report", "--artifacts", tmp.str(""), "--out", tmp.str("report")}) ==
          cli::kExitOk);
  CHECK(fs::exists(tmp.path / "report" / "report_manifest.json"));
  bool any_svg = false;
  for (const auto& entry : fs::directory_iterator(tmp.path / "report")) {
    if (entry.path().extension() == ".svg") {
      any_svg = true;
      CHECK(well_formed_xml(entry.path()));
    }
  }
  CHECK(any_svg);
  CHECK(fs::exists(tmp.path / "report" / "overlay_A-FR.csv"));

  // The overlay data echoes the observed series bit for bit.
  const auto case_table = csv::read(tmp.str("cases/A-FR_meas.csv"));
  const auto overlay = csv::read(tmp.str("report/overlay_A-FR.csv"));
  CHECK(overlay.values.col(0) == case_table.values.col(0));  // time column
  for (int l = 0; l < 3; ++l) {
    CHECK(overlay.values.col(1 + l) == case_table.values.col(1 + l));
  }
}

TEST_CASE("report on chains-only artifacts renders traces and histograms only") {
  TempDir tmp("iuq_cli_chains_only");
  // Synthesize a small chain run directly.
  sampler::PosteriorChain chain;
  chain.names = {"a", "b"};
  chain.draws = Eigen::MatrixXd::Random(60, 2);
  chain.chain_index = 0;
  sampler::PosteriorChain chain2 = chain;
  chain2.chain_index = 1;
  chain2.draws = Eigen::MatrixXd::Random(60, 2);
  sampler::save_chains(tmp.path / "chains" / "run", {chain, chain2});

  const auto result = report::render(tmp.path, tmp.path / "report");
  bool any_trace = false, any_hist = false, any_overlay = false;
  for (const auto& name : result.written) {
    if (name.starts_with("trace_")) any_trace = true;
    if (name.starts_with("hist_")) any_hist = true;
    if (name.starts_with("overlay_")) any_overlay = true;
  }
  CHECK(any_trace);
  CHECK(any_hist);
  CHECK_FALSE(any_overlay);
  CHECK(std::find(result.missing.begin(), result.missing.end(), "overlays") !=
        result.missing.end());
  CHECK(std::find(result.missing.begin(), result.missing.end(), "validation") !=
        result.missing.end());
}

TEST_CASE("svg figures are well-formed") {
  TempDir tmp("iuq_cli_svg");
  svg::Figure fig(400, 300, "test <figure> & more");
  fig.set_view(0.0, 1.0, 0.0, 1.0);
  fig.axes("x", "y");
  Eigen::VectorXd x(3), y(3);
  x << 0.1, 0.5, 0.9;
  y << 0.2, 0.8, 0.4;
  fig.polyline(x, y, "#1f77b4");
  fig.scatter(x, y, "#d62728");
  fig.bars(x, y, 0.05, "#2ca02c");
  fig.legend_entry("series", "#1f77b4");
  fig.save(tmp.path / "fig.svg");
  CHECK(well_formed_xml(tmp.path / "fig.svg"));

  const auto [centers, counts] = svg::histogram(Eigen::VectorXd::Random(200), 20);
  CHECK(centers.size() == 20);
  CHECK(counts.sum() == doctest::Approx(200.0));
}
