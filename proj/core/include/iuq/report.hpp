#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace iuq::report {

struct ReportResult {
  std::vector<std::string> written;  // files created under the output directory
  std::vector<std::string> missing;  // artifact kinds that were not found
};

/// Render every figure the artifact directory supports: trace plots and
/// posterior histograms per chain run, pairwise scatter plots, covariance
/// heatmaps, prediction-vs-observation overlays, error-distribution
/// comparisons, and the convergence-study curve. Each figure is a
/// self-contained SVG with its underlying data written as CSV. Missing
/// artifact kinds are listed and the rest of the report is still produced.
ReportResult render(const std::filesystem::path& artifacts_dir,
                    const std::filesystem::path& out_dir);

}  // namespace iuq::report
