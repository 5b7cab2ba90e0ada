#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "headgest/error.hpp"
#include "headgest/keyboard.hpp"

namespace headgest {

/// Fraction of predictions equal to their target element by element.
inline double exact_accuracy(const std::vector<ClusterSequence>& preds, const std::vector<ClusterSequence>& targets) {
  if (preds.size() != targets.size()) throw LengthMismatch("predictions and targets differ in count");
  if (preds.empty()) throw LengthMismatch("accuracy of an empty set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Weights of the two M-DTW cost terms.
struct MdtwConfig {
  double w_euclid = 1.0;
  double w_dir = 1.0;

  void validate() const {
    if (w_euclid < 0 || w_dir < 0 || (w_euclid == 0 && w_dir == 0)) {
      throw InvalidConfig("M-DTW weights must be non-negative and not both zero");
    }
  }
};

struct Vec2 {
  double x = 0;
  double y = 0;
};

inline double distance(Vec2 a, Vec2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

inline std::vector<Vec2> grid_points(const ClusterSequence& seq) {
  std::vector<Vec2> pts;
  pts.reserve(seq.size());
  for (ClusterId c : seq) {
    const GridCoord g = coord_of(c);
    pts.push_back({static_cast<double>(g.col), static_cast<double>(g.row)});
  }
  return pts;
}

/// Unit step directions; the first element and stationary steps get (0,0).
inline std::vector<Vec2> step_directions(const std::vector<Vec2>& pts) {
  std::vector<Vec2> dirs(pts.size());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    const double n = std::hypot(dx, dy);
    if (n > 0) dirs[i] = {dx / n, dy / n};
  }
  return dirs;
}

/// Pairwise M-DTW cell costs, |a| x |b| row-major. w_dir = 0 gives plain DTW costs.
inline std::vector<double> mdtw_costs(const ClusterSequence& a, const ClusterSequence& b, const MdtwConfig& cfg) {
  const auto pa = grid_points(a), pb = grid_points(b);
  const auto da = step_directions(pa), db = step_directions(pb);
  std::vector<double> cost(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double c = cfg.w_euclid * distance(pa[i], pb[j]);
      if (cfg.w_dir != 0) c += cfg.w_dir * 0.5 * distance(da[i], db[j]);
      cost[i * b.size() + j] = c;
    }
  }
  return cost;
}

namespace detail {

inline double dtw_accumulate(const std::vector<double>& cost, std::size_t n, std::size_t m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = cost[(i - 1) * m + (j - 1)] + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace detail

inline double mdtw(const ClusterSequence& a, const ClusterSequence& b, const MdtwConfig& cfg = {}) {
  if (a.empty() || b.empty()) throw LengthMismatch("DTW needs non-empty sequences");
  cfg.validate();
  return detail::dtw_accumulate(mdtw_costs(a, b, cfg), a.size(), b.size());
}

/// Classic DTW over grid coordinates with Euclidean cell cost.
inline double dtw(const ClusterSequence& a, const ClusterSequence& b) { return mdtw(a, b, {1.0, 0.0}); }

}  // namespace headgest
