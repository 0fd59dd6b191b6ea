#include "iuq/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"

namespace iuq::svg {

namespace {

constexpr double kMarginLeft = 58.0;
constexpr double kMarginRight = 16.0;
constexpr double kMarginTop = 30.0;
constexpr double kMarginBottom = 44.0;

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Fixed-precision pixel coordinate; avoids exponent notation inside paths.
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  if (v == 0.0) return "0";
  const double a = std::abs(v);
  char buf[32];
  if (a >= 1e4 || a < 1e-3) {
    std::snprintf(buf, sizeof(buf), "%.2e", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4g", v);
  }
  return buf;
}

}  // namespace

const std::string& color_cycle(std::size_t index) {
  static const std::vector<std::string> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[index % colors.size()];
}

Figure::Figure(double width, double height, std::string title)
    : width_(width), height_(height), title_(std::move(title)) {}

void Figure::set_view(double xmin, double xmax, double ymin, double ymax) {
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  xmin_ = xmin;
  xmax_ = xmax;
  ymin_ = ymin;
  ymax_ = ymax;
}

double Figure::to_px_x(double x) const {
  return kMarginLeft + (x - xmin_) / (xmax_ - xmin_) * (width_ - kMarginLeft - kMarginRight);
}

double Figure::to_px_y(double y) const {
  return height_ - kMarginBottom -
         (y - ymin_) / (ymax_ - ymin_) * (height_ - kMarginTop - kMarginBottom);
}

void Figure::axes(const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream s;
  const double x0 = kMarginLeft, x1 = width_ - kMarginRight;
  const double y0 = height_ - kMarginBottom, y1 = kMarginTop;
  s << "<rect x=\"" << px(x0) << "\" y=\"" << px(y1) << "\" width=\"" << px(x1 - x0)
    << "\" height=\"" << px(y0 - y1) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin_ + (xmax_ - xmin_) * i / 4.0;
    const double pxx = to_px_x(fx);
    s << "<line x1=\"" << px(pxx) << "\" y1=\"" << px(y0) << "\" x2=\"" << px(pxx) << "\" y2=\""
      << px(y0 + 4) << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << px(pxx) << "\" y=\"" << px(y0 + 16)
      << "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#333\">" << tick_label(fx)
      << "</text>\n";
    const double fy = ymin_ + (ymax_ - ymin_) * i / 4.0;
    const double pxy = to_px_y(fy);
    s << "<line x1=\"" << px(x0 - 4) << "\" y1=\"" << px(pxy) << "\" x2=\"" << px(x0)
      << "\" y2=\"" << px(pxy) << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << px(x0 - 7) << "\" y=\"" << px(pxy + 3)
      << "\" font-size=\"10\" text-anchor=\"end\" fill=\"#333\">" << tick_label(fy)
      << "</text>\n";
  }
  s << "<text x=\"" << px((x0 + x1) / 2) << "\" y=\"" << px(height_ - 8)
    << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\">" << escape(xlabel)
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << px((y0 + y1) / 2)
    << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 14 "
    << px((y0 + y1) / 2) << ")\">" << escape(ylabel) << "</text>\n";
  body_.push_back(s.str());
}

void Figure::polyline(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const std::string& color, double stroke_width, bool dashed) {
  if (x.size() != y.size() || x.size() == 0) return;
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke_width
    << "\"";
  if (dashed) s << " stroke-dasharray=\"5,4\"";
  s << " points=\"";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) s << ' ';
    s << px(to_px_x(x(i))) << ',' << px(to_px_y(y(i)));
  }
  s << "\"/>\n";
  body_.push_back(s.str());
}

void Figure::scatter(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color,
                     double radius) {
  std::ostringstream s;
  for (Eigen::Index i = 0; i < std::min(x.size(), y.size()); ++i) {
    s << "<circle cx=\"" << px(to_px_x(x(i))) << "\" cy=\"" << px(to_px_y(y(i))) << "\" r=\""
      << radius << "\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
  }
  body_.push_back(s.str());
}

void Figure::bars(const Eigen::VectorXd& centers, const Eigen::VectorXd& heights,
                  double bar_width, const std::string& color) {
  std::ostringstream s;
  const double base = to_px_y(std::max(0.0, ymin_));
  for (Eigen::Index i = 0; i < std::min(centers.size(), heights.size()); ++i) {
    const double left = to_px_x(centers(i) - bar_width / 2.0);
    const double right = to_px_x(centers(i) + bar_width / 2.0);
    const double top = to_px_y(heights(i));
    s << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(right - left)
      << "\" height=\"" << px(std::max(0.0, base - top)) << "\" fill=\"" << color
      << "\" fill-opacity=\"0.75\"/>\n";
  }
  body_.push_back(s.str());
}

void Figure::heatmap(const Eigen::MatrixXd& values) {
  const Eigen::Index rows = values.rows(), cols = values.cols();
  if (rows == 0 || cols == 0) return;
  const double vmin = values.minCoeff();
  const double vmax = values.maxCoeff();
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  std::ostringstream s;
  const double cw = (xmax_ - xmin_) / static_cast<double>(cols);
  const double ch = (ymax_ - ymin_) / static_cast<double>(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = (values(r, c) - vmin) / span;
      const int red = static_cast<int>(255 * v);
      const int blue = static_cast<int>(255 * (1.0 - v));
      const int green = static_cast<int>(80 + 60 * (1.0 - std::abs(2 * v - 1)));
      const double x = xmin_ + c * cw;
      const double y = ymax_ - (r + 1) * ch;  // row 0 on top
      s << "<rect x=\"" << px(to_px_x(x)) << "\" y=\"" << px(to_px_y(y + ch)) << "\" width=\""
        << px(to_px_x(x + cw) - to_px_x(x)) << "\" height=\""
        << px(to_px_y(y) - to_px_y(y + ch)) << "\" fill=\"rgb(" << red << ',' << green << ','
        << blue << ")\"/>\n";
    }
  }
  body_.push_back(s.str());
}

void Figure::legend_entry(const std::string& label, const std::string& color) {
  legend_.emplace_back(label, color);
}

std::string Figure::str() const {
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_
    << "\" viewBox=\"0 0 " << width_ << ' ' << height_
    << "\" font-family=\"Helvetica,Arial,sans-serif\">\n";
  s << "<rect width=\"" << width_ << "\" height=\"" << height_ << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << px(width_ / 2) << "\" y=\"18\" font-size=\"13\" text-anchor=\"middle\" "
    << "fill=\"#111\">" << escape(title_) << "</text>\n";
  for (const auto& b : body_) s << b;
  double ly = kMarginTop + 12.0;
  for (const auto& [label, color] : legend_) {
    const double lx = width_ - kMarginRight - 130.0;
    s << "<rect x=\"" << px(lx) << "\" y=\"" << px(ly - 8) << "\" width=\"14\" height=\"8\" "
      << "fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << px(lx + 18) << "\" y=\"" << px(ly) << "\" font-size=\"10\" fill=\"#333\">"
      << escape(label) << "</text>\n";
    ly += 14.0;
  }
  s << "</svg>\n";
  return s.str();
}

void Figure::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("svg: cannot write " + path.string());
  out << str();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> histogram(const Eigen::VectorXd& values, int bins) {
  if (bins < 1 || values.size() == 0) return {Eigen::VectorXd(), Eigen::VectorXd()};
  const double lo = values.minCoeff();
  double hi = values.maxCoeff();
  if (hi <= lo) hi = lo + 1.0;
  const double w = (hi - lo) / bins;
  Eigen::VectorXd centers(bins), counts = Eigen::VectorXd::Zero(bins);
  for (int b = 0; b < bins; ++b) centers(b) = lo + (b + 0.5) * w;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto b = static_cast<int>((values(i) - lo) / w);
    counts(std::clamp(b, 0, bins - 1)) += 1.0;
  }
  return {centers, counts};
}

}  // namespace iuq::svg
