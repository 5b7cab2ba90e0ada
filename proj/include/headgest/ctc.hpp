#pragma once

// Connectionist temporal classification over frame log-probabilities.
// Column 0 is the blank; columns 1..C-1 are labels (cluster ids for C = 10).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headgest/error.hpp"
#include "headgest/keyboard.hpp"

namespace headgest {

inline constexpr int kBlank = 0;
inline constexpr int kNumClasses = kNumClusters + 1;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// T x C, rows are log-probabilities.
using LogProbMatrix = Eigen::MatrixXd;
using Labels = std::vector<int>;

inline double log_add(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Frames needed to emit `labels`: one per label plus a blank between repeats.
inline std::size_t ctc_min_frames(std::span<const int> labels) noexcept {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) n += labels[i] == labels[i - 1];
  return n;
}

struct CtcResult {
  double loss = 0;
  /// d loss / d logits where each row of the input is log_softmax(logits).
  /// Equals softmax(row) - posterior occupancy, so each row sums to zero.
  Eigen::MatrixXd grad;
};

inline CtcResult ctc_loss_grad(const LogProbMatrix& lp, std::span<const int> labels) {
  const Eigen::Index T = lp.rows();
  const Eigen::Index C = lp.cols();
  const auto L = static_cast<Eigen::Index>(labels.size());
  for (int l : labels) {
    if (l <= kBlank || l >= C) throw InvalidCluster("label " + std::to_string(l) + " outside 1.." + std::to_string(C - 1));
  }
  if (T < 1 || static_cast<std::size_t>(T) < ctc_min_frames(labels)) {
    throw InfeasibleTarget("target of length " + std::to_string(L) + " needs " +
                           std::to_string(ctc_min_frames(labels)) + " frames, got " + std::to_string(T));
  }

  const Eigen::Index S = 2 * L + 1;
  std::vector<int> ext(static_cast<std::size_t>(S), kBlank);
  for (Eigen::Index i = 0; i < L; ++i) ext[static_cast<std::size_t>(2 * i + 1)] = labels[static_cast<std::size_t>(i)];
  auto skip_allowed = [&](Eigen::Index s) {
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, S, kNegInf);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, S, kNegInf);

  alpha(0, 0) = lp(0, kBlank);
  if (S > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (skip_allowed(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, ext[s]);
    }
  }

  beta(T - 1, S - 1) = lp(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = lp(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < S && skip_allowed(s + 2)) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, ext[s]);
    }
  }

  double log_likelihood = alpha(T - 1, S - 1);
  if (S > 1) log_likelihood = log_add(log_likelihood, alpha(T - 1, S - 2));

  CtcResult result;
  result.loss = -log_likelihood;
  result.grad = Eigen::MatrixXd::Zero(T, C);
  if (log_likelihood == kNegInf) return result;

  Eigen::MatrixXd occupancy = Eigen::MatrixXd::Constant(T, C, kNegInf);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      if (alpha(t, s) == kNegInf || beta(t, s) == kNegInf) continue;
      const int k = ext[s];
      occupancy(t, k) = log_add(occupancy(t, k), alpha(t, s) + beta(t, s) - lp(t, k));
    }
  }
  result.grad = lp.array().exp() - (occupancy.array() - log_likelihood).exp();
  return result;
}

inline CtcResult ctc_loss_grad(const LogProbMatrix& lp, const ClusterSequence& target) {
  const Labels labels = to_ints(target);
  return ctc_loss_grad(lp, std::span<const int>(labels));
}

/// Best path: per-frame argmax (lowest index on ties), merge repeats, drop blanks.
inline Labels greedy_decode(const LogProbMatrix& lp) {
  Labels out;
  int prev = kBlank;
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    Eigen::Index best = 0;
    lp.row(t).maxCoeff(&best);
    const int k = static_cast<int>(best);
    if (k != kBlank && k != prev) out.push_back(k);
    prev = k;
  }
  return out;
}

/// CTC prefix beam search. Each prefix carries the log-mass of paths ending
/// in blank and in its last label; the beam keeps the `width` prefixes with
/// the highest total, ties going to the lexicographically smaller prefix.
inline Labels beam_decode(const LogProbMatrix& lp, int width) {
  if (width < 1) throw InvalidConfig("beam width must be >= 1");
  struct Mass {
    double blank = kNegInf;
    double label = kNegInf;
    double total() const noexcept { return log_add(blank, label); }
  };
  using Entry = std::pair<Labels, Mass>;
  auto better = [](const Entry& a, const Entry& b) {
    const double ta = a.second.total();
    const double tb = b.second.total();
    if (ta != tb) return ta > tb;
    return a.first < b.first;
  };

  std::vector<Entry> beam{{Labels{}, Mass{0.0, kNegInf}}};
  const auto C = static_cast<int>(lp.cols());
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    std::map<Labels, Mass> next;
    for (const auto& [prefix, mass] : beam) {
      const double total = mass.total();
      Mass& same = next[prefix];
      same.blank = log_add(same.blank, total + lp(t, kBlank));
      const int last = prefix.empty() ? kBlank : prefix.back();
      for (int c = 1; c < C; ++c) {
        const double p = lp(t, c);
        Labels extended = prefix;
        extended.push_back(c);
        Mass& ext = next[extended];
        if (c == last) {
          next[prefix].label = log_add(next[prefix].label, mass.label + p);
          ext.label = log_add(ext.label, mass.blank + p);
        } else {
          ext.label = log_add(ext.label, total + p);
        }
      }
    }
    beam.assign(next.begin(), next.end());
    const auto keep = std::min(beam.size(), static_cast<std::size_t>(width));
    std::partial_sort(beam.begin(), beam.begin() + static_cast<std::ptrdiff_t>(keep), beam.end(), better);
    beam.resize(keep);
  }
  return std::min_element(beam.begin(), beam.end(), better)->first;
}

inline ClusterSequence to_clusters(const Labels& labels) { return make_sequence(labels); }

}  // namespace headgest
