#pragma once

#include <cmath>
#include <cstdint>

#include "headgest/error.hpp"
#include "headgest/net.hpp"

namespace headgest {

struct TrainConfig {
  double lr = 0.0025;
  double momentum = 0.9;
  bool nesterov = true;
  double clip_max_norm = 400.0;
  int epochs = 300;
  int batch_size = 20;
  std::uint64_t seed = 1;
  int beam_width = 10;  // holdout decoding
  unsigned threads = 0; // 0 = hardware concurrency

  void validate() const {
    if (!(lr > 0)) throw InvalidConfig("lr must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw InvalidConfig("momentum must be in [0, 1)");
    if (!(clip_max_norm > 0)) throw InvalidConfig("clip_max_norm must be positive");
    if (epochs < 1 || batch_size < 1 || beam_width < 1) throw InvalidConfig("epochs, batch_size and beam width must be >= 1");
  }
};

inline double global_norm(const ModelParams& g) {
  double sq = 0;
  zip_trainable([&](const std::string&, const auto& t) { sq += t.squaredNorm(); }, g);
  return std::sqrt(sq);
}

/// Clips `grads` to clip_max_norm, then applies SGD with (Nesterov) momentum:
///   v <- mu v - lr g;  p <- p + mu v - lr g   (Nesterov)
///                      p <- p + v             (classical)
/// Returns the pre-clipping gradient norm.
inline double sgd_step(ModelParams& params, ModelParams& grads, ModelParams& velocity, const TrainConfig& cfg) {
  const double norm = global_norm(grads);
  if (norm > cfg.clip_max_norm) {
    const double scale = cfg.clip_max_norm / norm;
    zip_trainable([&](const std::string&, auto& g) { g *= scale; }, grads);
  }
  const double mu = cfg.momentum;
  const double lr = cfg.lr;
  zip_trainable(
      [&](const std::string&, auto& p, const auto& g, auto& v) {
        v = mu * v - lr * g;
        if (cfg.nesterov) p += mu * v - lr * g;
        else p += v;
      },
      params, grads, velocity);
  return norm;
}

}  // namespace headgest
