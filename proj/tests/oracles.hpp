#pragma once

// Independent reference implementations used only by tests. None of these
// share code paths with the library routines they check.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headgest/ctc.hpp"
#include "headgest/keyboard.hpp"
#include "headgest/net.hpp"

namespace oracle {

struct EnumerationTooLarge : std::length_error {
  using std::length_error::length_error;
};

inline std::vector<int> collapse_path(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != 0 && k != prev) out.push_back(k);
    prev = k;
  }
  return out;
}

/// Calls fn(path) for every one of the C^T frame paths.
inline void for_each_path(int T, int C, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  while (true) {
    fn(path);
    int t = T - 1;
    while (t >= 0 && ++path[static_cast<std::size_t>(t)] == C) path[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) return;
  }
}

inline double path_prob(const Eigen::MatrixXd& lp, const std::vector<int>& path) {
  double s = 0;
  for (std::size_t t = 0; t < path.size(); ++t) s += lp(static_cast<Eigen::Index>(t), path[t]);
  return std::exp(s);
}

/// -log of the summed probability of all paths collapsing to `target`.
inline double brute_force_nll(const Eigen::MatrixXd& lp, const std::vector<int>& target) {
  if (lp.rows() > 10 || lp.cols() > 4) throw EnumerationTooLarge("brute force limited to T <= 10, C <= 4");
  double total = 0;
  for_each_path(static_cast<int>(lp.rows()), static_cast<int>(lp.cols()), [&](const std::vector<int>& path) {
    if (collapse_path(path) == target) total += path_prob(lp, path);
  });
  return total > 0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

/// Most probable label sequence by full marginalisation (ties: smaller sequence).
inline std::vector<int> brute_force_decode(const Eigen::MatrixXd& lp) {
  if (lp.rows() > 10 || lp.cols() > 4) throw EnumerationTooLarge("brute force limited to T <= 10, C <= 4");
  std::map<std::vector<int>, double> mass;
  for_each_path(static_cast<int>(lp.rows()), static_cast<int>(lp.cols()),
                [&](const std::vector<int>& path) { mass[collapse_path(path)] += path_prob(lp, path); });
  auto best = mass.begin();
  for (auto it = mass.begin(); it != mass.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

/// Random T x C matrix of normalised log-probabilities.
inline Eigen::MatrixXd random_logprobs(std::mt19937_64& rng, int T, int C, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd lp(T, C);
  for (int t = 0; t < T; ++t) {
    double lse = 0, m = -1e300;
    for (int c = 0; c < C; ++c) m = std::max(m, lp(t, c) = n(rng));
    for (int c = 0; c < C; ++c) lse += std::exp(lp(t, c) - m);
    lse = m + std::log(lse);
    for (int c = 0; c < C; ++c) lp(t, c) -= lse;
  }
  return lp;
}

/// Minimum-cost monotone alignment by enumerating every warping path.
inline double dtw_exhaustive(std::size_t n, std::size_t m, const std::function<double(std::size_t, std::size_t)>& cost) {
  if (n > 6 || m > 6) throw EnumerationTooLarge("exhaustive DTW limited to length 6");
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    acc += cost(i, j);
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, acc);
    if (j + 1 < m) walk(i, j + 1, acc);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

/// M-DTW by exhaustive search with the cell cost written out from scratch:
/// w_e * |p_i - q_j| + w_d * |u_i - v_j| / 2, u/v unit step directions.
inline double mdtw_exhaustive(const headgest::ClusterSequence& a, const headgest::ClusterSequence& b, double w_e,
                              double w_d) {
  auto xy = [](const headgest::ClusterSequence& s, std::size_t i) {
    const int v = s[i].value() - 1;
    return std::pair<double, double>{v % 3, v / 3};
  };
  auto dir = [&](const headgest::ClusterSequence& s, std::size_t i) {
    if (i == 0) return std::pair<double, double>{0, 0};
    auto [x1, y1] = xy(s, i);
    auto [x0, y0] = xy(s, i - 1);
    const double n = std::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
    if (n == 0) return std::pair<double, double>{0, 0};
    return std::pair<double, double>{(x1 - x0) / n, (y1 - y0) / n};
  };
  return dtw_exhaustive(a.size(), b.size(), [&](std::size_t i, std::size_t j) {
    auto [px, py] = xy(a, i);
    auto [qx, qy] = xy(b, j);
    auto [ux, uy] = dir(a, i);
    auto [vx, vy] = dir(b, j);
    return w_e * std::sqrt((px - qx) * (px - qx) + (py - qy) * (py - qy)) +
           w_d * 0.5 * std::sqrt((ux - vx) * (ux - vx) + (uy - vy) * (uy - vy));
  });
}

/// GRU step written element by element from the three gate equations.
inline Eigen::VectorXd gru_step_reference(const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                                          const headgest::GruDirection& d) {
  const Eigen::Index H = h.size(), I = x.size();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> z(H), r(H), out(H);
  for (Eigen::Index k = 0; k < H; ++k) {
    double az = d.b[k], ar = d.b[H + k];
    for (Eigen::Index i = 0; i < I; ++i) {
      az += d.W(k, i) * x[i];
      ar += d.W(H + k, i) * x[i];
    }
    for (Eigen::Index j = 0; j < H; ++j) {
      az += d.U(k, j) * h[j];
      ar += d.U(H + k, j) * h[j];
    }
    z[k] = sig(az);
    r[k] = sig(ar);
  }
  for (Eigen::Index k = 0; k < H; ++k) {
    double ah = d.b[2 * H + k];
    for (Eigen::Index i = 0; i < I; ++i) ah += d.W(2 * H + k, i) * x[i];
    for (Eigen::Index j = 0; j < H; ++j) ah += d.U(2 * H + k, j) * r[j] * h[j];
    out[k] = (1 - z[k]) * h[k] + z[k] * std::tanh(ah);
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), H);
}

/// Total CTC loss of a training-mode forward over the batch.
inline double batch_ctc_loss(const headgest::ModelParams& p, const std::vector<Eigen::MatrixXd>& inputs,
                             const std::vector<headgest::ClusterSequence>& targets) {
  const auto fr = headgest::forward(p, inputs, true);
  double loss = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) loss += headgest::ctc_loss_grad(fr.logprobs[i], targets[i]).loss;
  return loss;
}

struct TensorCheck {
  std::string name;
  double rel_error = 0;  // |fd - analytic| / max(|fd| + |analytic|, floor), worst element
};

/// Central finite differences of batch_ctc_loss against the analytic backward
/// pass, every element of every trainable tensor.
inline std::vector<TensorCheck> gradient_check(const headgest::ModelParams& params, const std::vector<Eigen::MatrixXd>& inputs,
                                               const std::vector<headgest::ClusterSequence>& targets, double h = 1e-4) {
  const auto fr = headgest::forward(params, inputs, true);
  std::vector<Eigen::MatrixXd> dlogits;
  for (std::size_t i = 0; i < inputs.size(); ++i) dlogits.push_back(headgest::ctc_loss_grad(fr.logprobs[i], targets[i]).grad);
  headgest::ModelParams analytic = headgest::backward(params, fr.cache, dlogits);

  headgest::ModelParams probe = params;
  std::vector<TensorCheck> out;
  headgest::zip_trainable(
      [&](const std::string& name, auto& t, const auto& g) {
        TensorCheck c{name, 0.0};
        for (Eigen::Index k = 0; k < t.size(); ++k) {
          const double saved = t.data()[k];
          t.data()[k] = saved + h;
          const double up = batch_ctc_loss(probe, inputs, targets);
          t.data()[k] = saved - h;
          const double dn = batch_ctc_loss(probe, inputs, targets);
          t.data()[k] = saved;
          const double fd = (up - dn) / (2 * h);
          const double a = g.data()[k];
          c.rel_error = std::max(c.rel_error, std::abs(fd - a) / std::max(std::abs(fd) + std::abs(a), 1e-6));
        }
        out.push_back(c);
      },
      probe, analytic);
  return out;
}

/// Small random network for gradient checks; batch-norm gain and bias are
/// moved off their identity init so their gradients are exercised.
inline headgest::ModelParams small_net(int layers, int hidden, std::uint64_t seed) {
  headgest::NetConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden = hidden;
  auto p = headgest::ModelParams::init(cfg, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Eigen::Index k = 0; k < hidden; ++k) {
    p.bn.gain[k] = 1.0 + u(rng);
    p.bn.bias[k] = u(rng);
  }
  for (auto& layer : p.layers) {
    for (auto* d : {&layer.fwd, &layer.bwd}) {
      for (Eigen::Index k = 0; k < d->b.size(); ++k) d->b[k] = u(rng);
    }
  }
  for (Eigen::Index k = 0; k < p.head_b.size(); ++k) p.head_b[k] = u(rng);
  return p;
}

/// T x 198 embedding of a random smooth-ish pose sequence.
inline Eigen::MatrixXd random_embedding(std::mt19937_64& rng, int T) {
  std::uniform_real_distribution<double> a(-40.0, 40.0);
  headgest::PoseTrace tr;
  for (int t = 0; t < T; ++t) tr.frames.push_back({a(rng), a(rng), a(rng)});
  return headgest::embed_trace(tr);
}

}  // namespace oracle
