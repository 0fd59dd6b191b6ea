#include "iuq/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "iuq/calib.hpp"
#include "iuq/core.hpp"
#include "iuq/csv.hpp"
#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"
#include "iuq/sampler.hpp"
#include "iuq/surrogate.hpp"
#include "iuq/svg.hpp"

#include <nlohmann/json.hpp>

namespace iuq::report {

namespace fs = std::filesystem;

namespace {

struct Context {
  fs::path artifacts;
  fs::path out;
  ReportResult result;

  void wrote(const fs::path& p) { result.written.push_back(p.filename().string()); }
};

void render_chain_run(Context& ctx, const fs::path& run_dir, const std::string& run_name) {
  const auto chains = sampler::load_chains(run_dir);
  if (chains.empty()) return;
  const auto& names = chains.front().names;
  const Eigen::MatrixXd pooled = sampler::pooled_draws(chains);

  // Underlying data for every figure of this run.
  const fs::path draws_csv = ctx.out / ("draws_" + run_name + ".csv");
  csv::write(draws_csv, names, pooled);
  ctx.wrote(draws_csv);

  for (std::size_t p = 0; p < names.size(); ++p) {
    // Trace plot: one line per chain.
    svg::Figure trace(640, 300, run_name + ": trace of " + names[p]);
    double lo = pooled.col(static_cast<Eigen::Index>(p)).minCoeff();
    double hi = pooled.col(static_cast<Eigen::Index>(p)).maxCoeff();
    if (hi <= lo) hi = lo + 1.0;
    trace.set_view(0.0, static_cast<double>(chains.front().draws.rows()), lo, hi);
    trace.axes("draw", names[p]);
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto& d = chains[c].draws;
      Eigen::VectorXd idx = Eigen::VectorXd::LinSpaced(d.rows(), 0.0, d.rows() - 1.0);
      trace.polyline(idx, d.col(static_cast<Eigen::Index>(p)), svg::color_cycle(c), 1.0);
    }
    const fs::path trace_path = ctx.out / ("trace_" + run_name + "_" + names[p] + ".svg");
    trace.save(trace_path);
    ctx.wrote(trace_path);

    // Posterior histogram.
    auto [centers, counts] = svg::histogram(pooled.col(static_cast<Eigen::Index>(p)), 40);
    svg::Figure hist(480, 300, run_name + ": posterior of " + names[p]);
    hist.set_view(lo, hi, 0.0, counts.size() ? counts.maxCoeff() * 1.05 : 1.0);
    hist.axes(names[p], "count");
    if (centers.size() > 1) hist.bars(centers, counts, centers(1) - centers(0), "#1f77b4");
    const fs::path hist_path = ctx.out / ("hist_" + run_name + "_" + names[p] + ".svg");
    hist.save(hist_path);
    ctx.wrote(hist_path);
  }

  // Pairwise scatter plots: hyper columns when present, else leading columns.
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].starts_with("mu_") || names[i].starts_with("sigma_")) cols.push_back(i);
  }
  if (cols.empty()) {
    for (std::size_t i = 0; i < names.size(); ++i) cols.push_back(i);
  }
  if (cols.size() > 6) cols.resize(6);
  int pair_budget = 12;
  for (std::size_t a = 0; a < cols.size() && pair_budget > 0; ++a) {
    for (std::size_t b = a + 1; b < cols.size() && pair_budget > 0; ++b, --pair_budget) {
      const auto ca = static_cast<Eigen::Index>(cols[a]);
      const auto cb = static_cast<Eigen::Index>(cols[b]);
      svg::Figure fig(420, 380, run_name + ": " + names[cols[a]] + " vs " + names[cols[b]]);
      fig.set_view(pooled.col(ca).minCoeff(), pooled.col(ca).maxCoeff(),
                   pooled.col(cb).minCoeff(), pooled.col(cb).maxCoeff());
      fig.axes(names[cols[a]], names[cols[b]]);
      fig.scatter(pooled.col(ca), pooled.col(cb), "#2ca02c", 1.8);
      const fs::path p =
          ctx.out / ("pairs_" + run_name + "_" + names[cols[a]] + "_" + names[cols[b]] + ".svg");
      fig.save(p);
      ctx.wrote(p);
    }
  }
}

void render_heatmap(Context& ctx, const fs::path& cov_csv) {
  const auto table = csv::read(cov_csv);
  std::string id = cov_csv.stem().string();
  svg::Figure fig(520, 500, id + ": covariance heatmap");
  fig.set_view(0.0, static_cast<double>(table.cols()), 0.0, static_cast<double>(table.rows()));
  fig.heatmap(table.values);
  fig.axes("index", "index");
  const fs::path svg_path = ctx.out / ("heatmap_" + id + ".svg");
  fig.save(svg_path);
  ctx.wrote(svg_path);
  const fs::path data_path = ctx.out / ("heatmap_" + id + ".csv");
  csv::write(data_path, table.header, table.values);
  ctx.wrote(data_path);
}

// Posterior-mean theta for a case: either a dedicated run directory named
// after the case (all columns are theta), or the theta_<case>_* columns of a
// hierarchical run.
bool posterior_mean_theta(const fs::path& chains_root, const std::string& case_id,
                          Eigen::Index dim, Eigen::VectorXd* theta) {
  if (!fs::exists(chains_root)) return false;
  for (const auto& entry : fs::directory_iterator(chains_root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "diagnostics.json")) continue;
    const auto chains = sampler::load_chains(entry.path());
    if (chains.empty()) continue;
    const Eigen::MatrixXd pooled = sampler::pooled_draws(chains);
    const auto& names = chains.front().names;

    std::vector<Eigen::Index> cols;
    if (entry.path().filename().string() == case_id) {
      for (std::size_t i = 0; i < names.size(); ++i) cols.push_back(static_cast<Eigen::Index>(i));
    } else {
      const std::string prefix = "theta_" + case_id + "_";
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].starts_with(prefix)) cols.push_back(static_cast<Eigen::Index>(i));
      }
    }
    if (static_cast<Eigen::Index>(cols.size()) != dim) continue;
    theta->resize(dim);
    for (Eigen::Index p = 0; p < dim; ++p) (*theta)(p) = pooled.col(cols[p]).mean();
    return true;
  }
  return false;
}

void render_overlay(Context& ctx, const std::string& case_id, const TimeSeriesGrid& meas,
                    const surrogate::Surrogate& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd pred_flat = surrogate::predict(model, theta);
  const Eigen::MatrixXd pred =
      unflatten(pred_flat, meas.location_count(), meas.step_count());

  // Data CSV: time, observed, predicted per location.
  std::vector<std::string> header = {"time"};
  for (const auto& loc : meas.locations) header.push_back("obs_" + loc);
  for (const auto& loc : meas.locations) header.push_back("pred_" + loc);
  Eigen::MatrixXd data(meas.step_count(), 1 + 2 * meas.location_count());
  data.col(0) = meas.times;
  data.middleCols(1, meas.location_count()) = meas.values.transpose();
  data.rightCols(meas.location_count()) = pred.transpose();
  const fs::path data_path = ctx.out / ("overlay_" + case_id + ".csv");
  csv::write(data_path, header, data);
  ctx.wrote(data_path);

  svg::Figure fig(640, 380, case_id + ": observation vs calibrated prediction");
  double lo = std::min(meas.values.minCoeff(), pred.minCoeff());
  double hi = std::max(meas.values.maxCoeff(), pred.maxCoeff());
  fig.set_view(meas.times.minCoeff(), meas.times.maxCoeff(), lo - 0.02, hi + 0.02);
  fig.axes("time [s]", "void fraction");
  for (Eigen::Index l = 0; l < meas.location_count(); ++l) {
    fig.scatter(meas.times, meas.values.row(l).transpose(), svg::color_cycle(l), 2.2);
    fig.polyline(meas.times, pred.row(l).transpose(), svg::color_cycle(l), 1.6);
    fig.legend_entry(meas.locations[static_cast<std::size_t>(l)],
                     svg::color_cycle(static_cast<std::size_t>(l)));
  }
  const fs::path svg_path = ctx.out / ("overlay_" + case_id + ".svg");
  fig.save(svg_path);
  ctx.wrote(svg_path);
}

void render_validation(Context& ctx, const fs::path& report_csv) {
  std::ifstream in(report_csv);
  if (!in) return;
  std::string line;
  std::getline(in, line);  // header
  struct Row {
    std::string case_id, split, source;
    double mean, sd, q25, q75;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() < 13) continue;
    rows.push_back({cells[0], cells[1], cells[2], std::stod(cells[4]), std::stod(cells[5]),
                    std::stod(cells[9]), std::stod(cells[11])});
  }
  if (rows.empty()) return;

  // Echo the underlying table so the report directory is self-contained.
  {
    std::ifstream src(report_csv, std::ios::binary);
    std::ofstream dst(ctx.out / "error_distributions.csv", std::ios::binary);
    dst << src.rdbuf();
    ctx.wrote(ctx.out / "error_distributions.csv");
  }

  for (const std::string split : {"train", "test"}) {
    std::vector<Row> subset;
    for (const auto& r : rows) {
      if (r.split == split) subset.push_back(r);
    }
    if (subset.empty()) continue;
    double lo = 0.0, hi = 0.0;
    for (const auto& r : subset) {
      lo = std::min(lo, r.mean - 2.5 * r.sd);
      hi = std::max(hi, r.mean + 2.5 * r.sd);
    }
    svg::Figure fig(640, 360, "error distributions (" + split + " set)");
    fig.set_view(-0.6, static_cast<double>(subset.size() / 2) - 0.4, lo, hi);
    fig.axes("case", "observation - prediction");
    std::map<std::string, int> case_pos;
    for (const auto& r : subset) {
      if (!case_pos.count(r.case_id)) {
        const int idx = static_cast<int>(case_pos.size());
        case_pos[r.case_id] = idx;
      }
    }
    for (const auto& r : subset) {
      const double x = case_pos[r.case_id] + (r.source == "prior" ? -0.15 : 0.15);
      const std::string color = r.source == "prior" ? "#7f7f7f" : "#d62728";
      Eigen::VectorXd xs(2), ys(2);
      xs << x, x;
      ys << r.mean - 2.0 * r.sd, r.mean + 2.0 * r.sd;
      fig.polyline(xs, ys, color, 1.2);
      Eigen::VectorXd bx(2), by(2);
      bx << x, x;
      by << r.q25, r.q75;
      fig.polyline(bx, by, color, 4.0);
      Eigen::VectorXd cx(1), cy(1);
      cx << x;
      cy << r.mean;
      fig.scatter(cx, cy, color, 2.5);
    }
    fig.legend_entry("prior", "#7f7f7f");
    fig.legend_entry("posterior", "#d62728");
    const fs::path p = ctx.out / ("errors_" + split + ".svg");
    fig.save(p);
    ctx.wrote(p);
  }
}

void render_study(Context& ctx, const fs::path& study_csv) {
  const auto table = csv::read(study_csv);
  const auto n_col = table.column_index("n");
  const auto backend_col = table.column_index("backend");
  const auto mae_col = table.column_index("mae");
  if (n_col < 0 || backend_col < 0 || mae_col < 0) return;

  svg::Figure fig(560, 360, "surrogate convergence study");
  double n_hi = table.values.col(n_col).maxCoeff();
  double mae_hi = table.values.col(mae_col).maxCoeff();
  fig.set_view(0.0, n_hi * 1.05, 0.0, mae_hi * 1.1);
  fig.axes("training samples", "MAE");
  for (int backend = 0; backend <= 1; ++backend) {
    std::vector<std::pair<double, double>> pts;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      if (static_cast<int>(table.values(r, backend_col)) == backend &&
          table.values(r, mae_col) >= 0.0) {
        pts.emplace_back(table.values(r, n_col), table.values(r, mae_col));
      }
    }
    std::sort(pts.begin(), pts.end());
    Eigen::VectorXd xs(static_cast<Eigen::Index>(pts.size()));
    Eigen::VectorXd ys(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      xs(static_cast<Eigen::Index>(i)) = pts[i].first;
      ys(static_cast<Eigen::Index>(i)) = pts[i].second;
    }
    const std::string color = svg::color_cycle(static_cast<std::size_t>(backend));
    fig.polyline(xs, ys, color, 1.8);
    fig.scatter(xs, ys, color, 3.0);
    fig.legend_entry(backend == 0 ? "gp_pca" : "mlp", color);
  }
  const fs::path p = ctx.out / "convergence_study.svg";
  fig.save(p);
  ctx.wrote(p);
  const fs::path data = ctx.out / "convergence_study.csv";
  csv::write(data, table.header, table.values);
  ctx.wrote(data);
}

}  // namespace

ReportResult render(const fs::path& artifacts_dir, const fs::path& out_dir) {
  if (!fs::exists(artifacts_dir)) {
    throw ValidationError("report: artifacts directory does not exist: " +
                          artifacts_dir.string());
  }
  fs::create_directories(out_dir);
  Context ctx;
  ctx.artifacts = artifacts_dir;
  ctx.out = out_dir;

  // Chain runs: directories containing diagnostics.json, either under
  // chains/ or directly under the artifacts root.
  bool any_chains = false;
  std::vector<fs::path> chain_roots = {artifacts_dir / "chains", artifacts_dir};
  for (const auto& root : chain_roots) {
    if (!fs::exists(root)) continue;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && fs::exists(entry.path() / "diagnostics.json")) {
        render_chain_run(ctx, entry.path(), entry.path().filename().string());
        any_chains = true;
      }
    }
  }
  if (fs::exists(artifacts_dir / "diagnostics.json")) {
    render_chain_run(ctx, artifacts_dir, artifacts_dir.filename().string());
    any_chains = true;
  }
  if (!any_chains) ctx.result.missing.push_back("chains");

  // Covariance heatmaps.
  bool any_cov = false;
  const fs::path cov_dir = fs::exists(artifacts_dir / "cov") ? artifacts_dir / "cov"
                                                             : artifacts_dir;
  if (fs::exists(cov_dir)) {
    for (const auto& entry : fs::directory_iterator(cov_dir)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("cov_") && entry.path().extension() == ".csv") {
        render_heatmap(ctx, entry.path());
        any_cov = true;
      }
    }
  }
  if (!any_cov) ctx.result.missing.push_back("covariance");

  // Prediction-vs-observation overlays need cases + surrogates + chains.
  bool any_overlay = false;
  const fs::path cases_dir = artifacts_dir / "cases";
  const fs::path surrogates_dir = artifacts_dir / "surrogates";
  if (fs::exists(cases_dir) && fs::exists(surrogates_dir)) {
    for (const auto& entry : fs::directory_iterator(cases_dir)) {
      const auto name = entry.path().filename().string();
      if (!name.ends_with("_meas.csv")) continue;
      const std::string case_id = name.substr(0, name.size() - std::string("_meas.csv").size());
      fs::path model_path;
      for (const auto& s : fs::directory_iterator(surrogates_dir)) {
        if (s.path().filename().string().starts_with(case_id + "_") &&
            s.path().extension() == ".json") {
          model_path = s.path();
          break;
        }
      }
      if (model_path.empty()) continue;
      try {
        const auto model = surrogate::Surrogate::load_json(model_path);
        const auto meas = read_grid_csv(entry.path());
        Eigen::VectorXd theta;
        if (posterior_mean_theta(artifacts_dir / "chains", case_id, model.input_dim, &theta)) {
          render_overlay(ctx, case_id, meas, model, theta);
          any_overlay = true;
        }
      } catch (const std::exception&) {
        // Broken artifact: skip, keep the report partial.
      }
    }
  }
  if (!any_overlay) ctx.result.missing.push_back("overlays");

  // Error distributions.
  const fs::path validation_csv = artifacts_dir / "validation" / "validation_report.csv";
  if (fs::exists(validation_csv)) {
    render_validation(ctx, validation_csv);
  } else {
    ctx.result.missing.push_back("validation");
  }

  // Convergence study.
  const fs::path study_csv = artifacts_dir / "study" / "study_report.csv";
  if (fs::exists(study_csv)) {
    render_study(ctx, study_csv);
  } else {
    ctx.result.missing.push_back("study");
  }

  nlohmann::json manifest;
  manifest["type"] = "report_manifest";
  manifest["written"] = ctx.result.written;
  manifest["missing"] = ctx.result.missing;
  std::ofstream out(out_dir / "report_manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  return ctx.result;
}

}  // namespace iuq::report
