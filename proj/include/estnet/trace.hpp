#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace estnet {

// Per-iteration record, one row per stored iteration.
struct RunTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, double> summary;
  std::vector<std::string> warnings;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::string diagnostic;

  explicit RunTrace(std::vector<std::string> cols = {}) : columns(std::move(cols)) {}

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw std::logic_error("RunTrace: row width mismatch");
    rows.push_back(std::move(row));
  }
  std::size_t col(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return c;
    throw std::out_of_range("RunTrace: no column '" + name + "'");
  }
  double at(std::size_t row, const std::string& name) const { return rows.at(row).at(col(name)); }
  std::vector<double> column(const std::string& name) const {
    std::vector<double> v;
    auto c = col(name);
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
  double last(const std::string& name) const {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    return rows.back()[col(name)];
  }
};

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"') o += '"';
    o += c;
  }
  return o + "\"";
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) os << (k ? "," : "") << csv_field(fields[k]);
  os << "\r\n";
}

inline void write_csv(std::ostream& os, const RunTrace& t) {
  write_csv_row(os, t.columns);
  for (const auto& r : t.rows) {
    std::vector<std::string> f;
    for (double x : r) f.push_back(format_double(x));
    write_csv_row(os, f);
  }
}

// Nanoseconds since construction, or 0 when timing is off (keeps outputs reproducible).
class WallClock {
 public:
  explicit WallClock(bool on) : on_(on), t0_(std::chrono::steady_clock::now()) {}
  double ns() const {
    if (!on_) return 0.0;
    return double(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0_).count());
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

struct StopRule {
  int max_iters = 10000;
  double tol = 1e-10;
  int stride = 1;  // store every stride-th row (the last row is always stored)
  bool timing = false;
  double divergence_factor = 1e6;
};

}  // namespace estnet
