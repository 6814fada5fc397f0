#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "randcon/errors.hpp"
#include "randcon/matrix.hpp"

namespace randcon {

// N x T matrix of ROI signals (rows are ROIs, columns are time points).
class RoiTimeSeries {
 public:
  RoiTimeSeries(Matrix values, std::vector<std::string> roi_labels = {},
                std::optional<double> sampling_period = std::nullopt)
      : values_(std::move(values)), labels_(std::move(roi_labels)), period_(sampling_period) {
    if (values_.rows() < 2 || values_.cols() < 2)
      throw DimensionError("time series needs N >= 2 ROIs and T >= 2 time points, got " +
                           std::to_string(values_.rows()) + "x" + std::to_string(values_.cols()));
    for (double v : values_.values())
      if (!std::isfinite(v)) throw ValidationError("time series contains a non-finite value");
    if (labels_.empty()) {
      labels_.reserve(values_.rows());
      for (std::size_t i = 0; i < values_.rows(); ++i) labels_.push_back("roi_" + std::to_string(i));
    }
    if (labels_.size() != values_.rows())
      throw ValidationError("expected " + std::to_string(values_.rows()) + " ROI labels, got " +
                            std::to_string(labels_.size()));
    if (std::set<std::string>(labels_.begin(), labels_.end()).size() != labels_.size())
      throw ValidationError("ROI labels must be unique");
    if (period_ && !(*period_ > 0.0)) throw ValidationError("sampling period must be positive");
  }

  std::size_t n_rois() const noexcept { return values_.rows(); }
  std::size_t n_timepoints() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  std::span<const double> roi(std::size_t n) const noexcept { return values_.row(n); }
  const std::vector<std::string>& roi_labels() const noexcept { return labels_; }
  std::optional<double> sampling_period() const noexcept { return period_; }

  friend bool operator==(const RoiTimeSeries&, const RoiTimeSeries&) = default;

 private:
  Matrix values_;
  std::vector<std::string> labels_;
  std::optional<double> period_;
};

// Subjects that share one (N, T) shape.
class SubjectGroup {
 public:
  SubjectGroup(std::vector<RoiTimeSeries> subjects, std::string group_id)
      : subjects_(std::move(subjects)), id_(std::move(group_id)) {
    if (subjects_.empty()) throw ValidationError("subject group '" + id_ + "' is empty");
    const auto n = subjects_.front().n_rois();
    const auto t = subjects_.front().n_timepoints();
    for (std::size_t i = 1; i < subjects_.size(); ++i) {
      if (subjects_[i].n_rois() != n || subjects_[i].n_timepoints() != t)
        throw DimensionError("subject " + std::to_string(i) + " of group '" + id_ + "' is " +
                             std::to_string(subjects_[i].n_rois()) + "x" +
                             std::to_string(subjects_[i].n_timepoints()) + ", expected " +
                             std::to_string(n) + "x" + std::to_string(t));
    }
  }

  const std::vector<RoiTimeSeries>& subjects() const noexcept { return subjects_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return subjects_.size(); }

 private:
  std::vector<RoiTimeSeries> subjects_;
  std::string id_;
};

enum class CsvLayout { rows_are_rois, rows_are_time };

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Parses CSV text. Row and column numbers in error messages are 1-based
// positions in the file.
inline RoiTimeSeries parse_csv(std::string_view text, CsvLayout layout) {
  struct Line {
    std::size_t number;
    std::vector<std::string> cells;
  };
  std::vector<Line> lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (!detail::trim(raw).empty()) lines.push_back({line_no, detail::split_csv_line(raw)});
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.empty()) throw ParseError("CSV input is empty");

  const std::size_t width = lines.front().cells.size();
  for (const auto& l : lines)
    if (l.cells.size() != width)
      throw ParseError("ragged CSV: row " + std::to_string(l.number) + " has " +
                       std::to_string(l.cells.size()) + " cells, expected " + std::to_string(width));

  // Header row: no cell after the first one is numeric.
  bool header = true;
  for (std::size_t c = 1; c < width; ++c)
    if (detail::parse_number(lines.front().cells[c])) header = false;
  if (width == 1) header = !detail::parse_number(lines.front().cells[0]);
  const std::size_t first_data = header ? 1 : 0;
  if (first_data >= lines.size()) throw DimensionError("CSV has a header but no data rows");

  const bool label_column = !detail::parse_number(lines[first_data].cells[0]);
  const std::size_t first_col = label_column ? 1 : 0;

  const std::size_t n_rows = lines.size() - first_data;
  const std::size_t n_cols = width - first_col;
  Matrix table(n_rows, n_cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto& l = lines[first_data + r];
    for (std::size_t c = 0; c < n_cols; ++c) {
      const auto value = detail::parse_number(l.cells[first_col + c]);
      if (!value)
        throw ParseError("non-numeric cell '" + l.cells[first_col + c] + "' at row " +
                         std::to_string(l.number) + " column " + std::to_string(first_col + c + 1));
      table(r, c) = *value;
    }
  }

  std::vector<std::string> labels;
  if (layout == CsvLayout::rows_are_rois) {
    if (label_column)
      for (std::size_t r = 0; r < n_rows; ++r) labels.push_back(lines[first_data + r].cells[0]);
    return RoiTimeSeries(std::move(table), std::move(labels));
  }
  if (header)
    for (std::size_t c = first_col; c < width; ++c) labels.push_back(lines.front().cells[c]);
  return RoiTimeSeries(table.transposed(), std::move(labels));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RoiTimeSeries load_csv(const std::filesystem::path& path,
                              CsvLayout layout = CsvLayout::rows_are_rois) {
  if (!std::filesystem::exists(path)) throw ValidationError("input file '" + path.string() + "' does not exist");
  try {
    return parse_csv(read_text_file(path), layout);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Canonical writer: rows are ROIs, first column holds the label, values at
// 17 significant digits so that load_csv reproduces them exactly.
inline std::string to_csv(const RoiTimeSeries& ts) {
  std::string out;
  for (std::size_t n = 0; n < ts.n_rois(); ++n) {
    out += ts.roi_labels()[n];
    for (double v : ts.roi(n)) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_csv(const std::filesystem::path& path, const RoiTimeSeries& ts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_csv(ts);
}

struct ZScoreResult {
  RoiTimeSeries series;
  std::vector<std::size_t> constant_rows;  // rows mapped to zeros
};

// Per-ROI standardization to mean 0 and population standard deviation 1.
inline ZScoreResult zscore_rows(const RoiTimeSeries& ts) {
  Matrix out = ts.values();
  std::vector<std::size_t> constant;
  const auto t = static_cast<double>(ts.n_timepoints());
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto row = out.row(n);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= t;
    double ss = 0.0;
    for (double v : row) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / t);
    if (!(sd > 1e-300) || sd <= 1e-14 * std::abs(mean)) {
      std::fill(row.begin(), row.end(), 0.0);
      constant.push_back(n);
      continue;
    }
    for (double& v : row) v = (v - mean) / sd;
  }
  return {RoiTimeSeries(std::move(out), ts.roi_labels(), ts.sampling_period()), std::move(constant)};
}

}  // namespace randcon
