#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace iuq::svg {

/// Minimal self-contained SVG figure writer: one plot area with axes, ticks,
/// polylines, scatter marks, bars, and heatmap cells in data coordinates.
class Figure {
 public:
  Figure(double width, double height, std::string title);

  void set_view(double xmin, double xmax, double ymin, double ymax);
  void axes(const std::string& xlabel, const std::string& ylabel);

  void polyline(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color,
                double stroke_width = 1.5, bool dashed = false);
  void scatter(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color,
               double radius = 2.5);
  /// Vertical bars: one per (center, height) pair, bar width in data units.
  void bars(const Eigen::VectorXd& centers, const Eigen::VectorXd& heights, double bar_width,
            const std::string& color);
  /// Matrix cells over the view rectangle, linear grayscale-to-color ramp.
  void heatmap(const Eigen::MatrixXd& values);
  void legend_entry(const std::string& label, const std::string& color);

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  double to_px_x(double x) const;
  double to_px_y(double y) const;

  double width_, height_;
  std::string title_;
  double xmin_ = 0.0, xmax_ = 1.0, ymin_ = 0.0, ymax_ = 1.0;
  std::vector<std::string> body_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

/// Histogram helper: returns (bin centers, counts) for `bins` equal bins.
std::pair<Eigen::VectorXd, Eigen::VectorXd> histogram(const Eigen::VectorXd& values, int bins);

/// Categorical color cycle.
const std::string& color_cycle(std::size_t index);

}  // namespace iuq::svg
