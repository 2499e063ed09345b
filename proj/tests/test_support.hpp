#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "pdsac/approximator.hpp"
#include "pdsac/rng.hpp"

namespace pdsac::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pdsac_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Worst relative error between an analytic gradient and central differences
// of `loss` over every parameter of `p`, probing at most `max_probes` entries
// per tensor (spread evenly).
inline double max_fd_error(ParamSet& p, const ParamSet& analytic, const std::function<double()>& loss,
                           double h = 1e-6, std::size_t max_probes = 40, double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t t = 0; t < p.tensor_count(); ++t) {
    auto vals = p.values(t);
    auto g = analytic.values(t);
    const std::size_t n = vals.size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_probes);
    for (std::size_t k = 0; k < n; k += stride) {
      const double orig = vals[k];
      vals[k] = orig + h;
      const double up = loss();
      vals[k] = orig - h;
      const double down = loss();
      vals[k] = orig;
      worst = std::max(worst, rel_err((up - down) / (2 * h), g[k], floor));
    }
  }
  return worst;
}

}  // namespace pdsac::testing
