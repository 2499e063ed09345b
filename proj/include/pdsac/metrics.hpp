#pragma once

// Metrics time series as CSV. Lines starting with '#' carry metadata and are
// skipped on read.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdsac/errors.hpp"
#include "pdsac/orchestrator.hpp"

namespace pdsac {

inline constexpr const char* kMetricsHeader =
    "learner_step,wall_ms,variant,policy_loss,critic_loss,value_loss,eval_reward_ma,eval_success_ma";

// %.17g round-trips every double, so files compare bitwise across identical runs.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s.empty()) throw DataError(where + ": empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) throw DataError(where + ": bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string format_metrics_row(const MetricsRow& r) {
  std::string s = std::to_string(r.learner_step);
  for (const std::string& f : {format_double(r.wall_ms), r.variant, format_double(r.policy_loss),
                               format_double(r.critic_loss), format_double(r.value_loss),
                               format_double(r.eval_reward_ma), format_double(r.eval_success_ma)}) {
    s += ',';
    s += f;
  }
  return s;
}

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const std::string& config_hash) : out_(path), path_(path) {
    if (!out_) throw DataError("cannot write metrics file " + path);
    out_ << "# config_hash: " << config_hash << '\n' << kMetricsHeader << '\n';
  }

  void write(const MetricsRow& r) { out_ << format_metrics_row(r) << '\n'; }

  void close() {
    out_.flush();
    if (!out_) throw DataError("write failed for " + path_);
    out_.close();
  }

 private:
  std::ofstream out_;
  std::string path_;
};

struct MetricsFile {
  std::string config_hash;
  std::vector<MetricsRow> rows;
};

inline MetricsFile read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path);
  MetricsFile file;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# config_hash: ";
      if (line.rfind(key, 0) == 0) file.config_hash = line.substr(key.size());
      continue;
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (!header_seen) {
      if (line != kMetricsHeader) throw DataError(where + ": unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError(where + ": expected 8 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    const double step = parse_double(f[0], where);
    if (step < 0 || step != std::floor(step)) throw DataError(where + ": learner_step must be a non-negative integer");
    r.learner_step = static_cast<std::uint64_t>(step);
    r.wall_ms = parse_double(f[1], where);
    r.variant = f[2];
    r.policy_loss = parse_double(f[3], where);
    r.critic_loss = parse_double(f[4], where);
    r.value_loss = parse_double(f[5], where);
    r.eval_reward_ma = parse_double(f[6], where);
    r.eval_success_ma = parse_double(f[7], where);
    file.rows.push_back(std::move(r));
  }
  if (!header_seen) throw DataError(path + ": missing header");
  return file;
}

}  // namespace pdsac
