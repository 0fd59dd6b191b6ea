#include "iuq/csv.hpp"

#include "iuq/errors.hpp"
#include "iuq/numeric.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace iuq::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t row,
                  std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  while (ptr != last && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != last) {
    throw ValidationError("csv: " + path.string() + ": row " + std::to_string(row) + ", column " +
                          std::to_string(col) + ": not a number: '" + cell + "'");
  }
  return v;
}

}  // namespace

Eigen::Index Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Table t;
  t.header = split_line(line);
  const std::size_t ncol = t.header.size();
  if (ncol == 0) throw ValidationError("csv: empty header in " + path.string());

  std::vector<double> data;
  std::size_t nrow = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncol) {
      throw ValidationError("csv: " + path.string() + ": row " + std::to_string(nrow + 1) +
                            " has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncol));
    }
    for (std::size_t c = 0; c < ncol; ++c) data.push_back(parse_cell(cells[c], path, nrow + 1, c));
    ++nrow;
  }

  t.values.resize(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(ncol));
  for (std::size_t r = 0; r < nrow; ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r * ncol + c];
    }
  }
  return t;
}

std::string to_string(const std::vector<std::string>& header,
                      const Eigen::Ref<const Eigen::MatrixXd>& values) {
  if (values.size() > 0 && static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw ValidationError("csv: header size does not match column count");
  }
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Eigen::Ref<const Eigen::MatrixXd>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("csv: cannot write " + path.string());
  out << to_string(header, values);
}

}  // namespace iuq::csv
