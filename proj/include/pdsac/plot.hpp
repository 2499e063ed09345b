#pragma once

// SVG rendering of reward curves and top-down trajectories. Output depends only
// on the inputs, so the same data always yields the same bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "pdsac/errors.hpp"
#include "pdsac/evaluation.hpp"
#include "pdsac/metrics.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct CurveSeries {
  std::string label;
  std::vector<CurvePoint> points;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* series_color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
}

// Roughly five round tick values covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
  return ticks;
}

}  // namespace detail

// Thins a metrics file to its evaluation moving-average curve. Rows before the
// first evaluation episode (NaN) are dropped; at most max_points are kept.
inline CurveSeries reward_curve(const MetricsFile& file, const std::string& label, std::size_t max_points = 2000) {
  std::vector<CurvePoint> all;
  for (const MetricsRow& r : file.rows)
    if (std::isfinite(r.eval_reward_ma)) all.push_back({static_cast<double>(r.learner_step), r.eval_reward_ma});
  CurveSeries s{label, {}};
  if (all.empty()) return s;
  const std::size_t stride = std::max<std::size_t>(1, (all.size() + max_points - 1) / max_points);
  for (std::size_t i = 0; i < all.size(); i += stride) s.points.push_back(all[i]);
  if (s.points.back().x != all.back().x) s.points.push_back(all.back());
  return s;
}

inline std::string reward_curve_svg(const std::vector<CurveSeries>& series, const std::string& title) {
  constexpr double W = 800, H = 500, L = 80, R = 30, T = 50, B = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const CurveSeries& s : series)
    for (const CurvePoint& p : s.points) {
      xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 1.0, ymax += 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad, ymax += ypad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  using detail::fmt;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
  o += "<rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
  o += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">" +
       detail::xml_escape(title) + "</text>\n";
  o += "<g stroke=\"black\" stroke-width=\"1\">\n";
  o += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(W - R) + "\" y2=\"" + fmt(H - B) + "\"/>\n";
  o += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(H - B) + "\"/>\n";
  o += "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (double t : detail::nice_ticks(xmin, xmax)) {
    const double x = px(t);
    o += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(x) + "\" y2=\"" + fmt(H - B + 5) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(H - B + 20) + "\" text-anchor=\"middle\">" + fmt(t / 1000.0) +
         "k</text>\n";
  }
  for (double t : detail::nice_ticks(ymin, ymax)) {
    const double y = py(t);
    o += "<line x1=\"" + fmt(L - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(y) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" + fmt(t) + "</text>\n";
  }
  o += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 15) +
       "\" text-anchor=\"middle\">update steps</text>\n";
  o += "<text x=\"20\" y=\"" + fmt((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       fmt((T + H - B) / 2) + ")\">moving average reward</text>\n";
  o += "</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const CurveSeries& s = series[i];
    if (s.points.empty()) continue;
    o += "<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(detail::series_color(i)) +
         "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      if (k) o += ' ';
      o += fmt(px(s.points[k].x)) + "," + fmt(py(s.points[k].y));
    }
    o += "\"/>\n";
  }

  o += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = T + 12 + 20.0 * static_cast<double>(i);
    o += "<line x1=\"" + fmt(W - R - 150) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(W - R - 125) + "\" y2=\"" + fmt(y) +
         "\" stroke=\"" + detail::series_color(i) + "\" stroke-width=\"3\"/>\n";
    o += "<text x=\"" + fmt(W - R - 118) + "\" y=\"" + fmt(y + 4) + "\">" + detail::xml_escape(series[i].label) +
         "</text>\n";
  }
  o += "</g>\n</svg>\n";
  return o;
}

// gnuplot data: one index block per series, separated by two blank lines.
inline std::string reward_curve_dat(const std::vector<CurveSeries>& series) {
  std::string o;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i) o += "\n\n";
    o += "# " + series[i].label + "\n# update_step moving_average_reward\n";
    for (const CurvePoint& p : series[i].points) o += format_double(p.x) + " " + format_double(p.y) + "\n";
  }
  return o;
}

// Top-down view: obstacles black, start green, goals red, paths blue. Each
// path is split into constant-opacity polylines by altitude band.
inline constexpr int kAltitudeBands = 5;

inline int altitude_band(double z, double z_max) {
  const int b = static_cast<int>(std::floor(std::clamp(z / z_max, 0.0, 1.0) * kAltitudeBands));
  return std::min(b, kAltitudeBands - 1);
}

inline double band_opacity(int band) { return 0.3 + 0.7 * (band + 0.5) / kAltitudeBands; }

inline std::string trajectory_svg(const WorldConfig& world, const std::vector<TrajectoryFile>& trajectories) {
  for (const TrajectoryFile& t : trajectories)
    if (t.layout_version != world.layout_version)
      throw DataError("trajectory layout_version " + std::to_string(t.layout_version) + " does not match layout " +
                      std::to_string(world.layout_version));
  constexpr double S = 600, M = 20;
  const double h = world.room_half_extent;
  const double scale = S / (2.0 * h);
  auto px = [&](double x) { return M + (x + h) * scale; };
  auto py = [&](double y) { return M + (h - y) * scale; };

  using detail::fmt;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n";
  o += "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
  o += "<rect class=\"room\" x=\"" + fmt(M) + "\" y=\"" + fmt(M) + "\" width=\"" + fmt(S) + "\" height=\"" + fmt(S) +
       "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (const Box& b : world.obstacles) {
    const Vec3 lo = b.lo(), hi = b.hi();
    o += "<rect class=\"obstacle\" x=\"" + fmt(px(lo.x)) + "\" y=\"" + fmt(py(hi.y)) + "\" width=\"" +
         fmt((hi.x - lo.x) * scale) + "\" height=\"" + fmt((hi.y - lo.y) * scale) + "\" fill=\"black\"/>\n";
  }
  for (const TrajectoryFile& t : trajectories) {
    std::size_t i = 0;
    while (i + 1 < t.points.size()) {
      const int band = altitude_band(t.points[i + 1].z, world.reward.z_max);
      std::size_t j = i + 1;
      while (j + 1 < t.points.size() && altitude_band(t.points[j + 1].z, world.reward.z_max) == band) ++j;
      o += "<polyline class=\"path\" fill=\"none\" stroke=\"blue\" stroke-width=\"1.5\" stroke-opacity=\"" +
           fmt(band_opacity(band)) + "\" points=\"";
      for (std::size_t k = i; k <= j; ++k) {
        if (k > i) o += ' ';
        o += fmt(px(t.points[k].x)) + "," + fmt(py(t.points[k].y));
      }
      o += "\"/>\n";
      i = j;
    }
  }
  std::vector<Vec3> goals = world.eval_targets;
  for (const TrajectoryFile& t : trajectories)
    if (std::find(goals.begin(), goals.end(), t.goal) == goals.end()) goals.push_back(t.goal);
  for (const Vec3& g : goals)
    o += "<circle class=\"goal\" cx=\"" + fmt(px(g.x)) + "\" cy=\"" + fmt(py(g.y)) + "\" r=\"" +
         fmt(world.reward.arrival_radius * scale) + "\" fill=\"red\" fill-opacity=\"0.6\"/>\n";
  o += "<circle class=\"start\" cx=\"" + fmt(px(world.start.x)) + "\" cy=\"" + fmt(py(world.start.y)) +
       "\" r=\"8\" fill=\"green\"/>\n";
  o += "</svg>\n";
  return o;
}

}  // namespace pdsac
