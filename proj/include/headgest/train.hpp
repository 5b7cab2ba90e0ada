#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "headgest/ctc.hpp"
#include "headgest/metrics.hpp"
#include "headgest/net.hpp"
#include "headgest/optim.hpp"

namespace headgest {

/// A decoder input (already subsampled, T' x 198) with its target.
struct TrainingSample {
  std::string id;
  Eigen::MatrixXd inputs;
  ClusterSequence target;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;       // mean per-sample CTC loss
  double grad_norm = 0;        // mean pre-clipping gradient norm
  double holdout_accuracy = 0;
  double holdout_mdtw = 0;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  double best_accuracy = 0;
  double best_mdtw = 0;
  std::vector<EpochLog> log;
};

/// M-DTW of a decoded sequence against its target. An empty decode is
/// scored as the resting pose, the centre cluster.
inline double prediction_mdtw(const ClusterSequence& pred, const ClusterSequence& target, const MdtwConfig& cfg = {}) {
  static const ClusterSequence rest = make_sequence({5});
  return mdtw(pred.empty() ? rest : pred, target, cfg);
}

inline std::vector<ClusterSequence> decode_all(const ModelParams& p, const std::vector<TrainingSample>& samples,
                                               int beam_width, unsigned threads = 1) {
  std::vector<ClusterSequence> out(samples.size());
  parallel_chunks(samples.size(), threads, [&](unsigned, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = to_clusters(beam_decode(infer(p, samples[i].inputs), beam_width));
  });
  return out;
}

struct HoldoutScore {
  double accuracy = 0;
  double mdtw_mean = 0;
};

inline HoldoutScore score(const std::vector<ClusterSequence>& preds, const std::vector<TrainingSample>& samples) {
  std::vector<ClusterSequence> targets;
  targets.reserve(samples.size());
  double total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    targets.push_back(samples[i].target);
    total += prediction_mdtw(preds[i], samples[i].target);
  }
  return {exact_accuracy(preds, targets), total / static_cast<double>(samples.size())};
}

inline void check_feasible(const std::vector<TrainingSample>& samples) {
  for (const auto& s : samples) {
    const auto labels = to_ints(s.target);
    const std::size_t need = ctc_min_frames(labels);
    if (static_cast<std::size_t>(s.inputs.rows()) < need) {
      throw InfeasibleTarget("sample " + s.id + ": " + std::to_string(s.inputs.rows()) + " frames after subsampling, target " +
                             to_string(s.target) + " needs " + std::to_string(need));
    }
  }
}

/// Mean CTC loss of one minibatch and its gradient; updates running BN stats.
inline double train_step(ModelParams& params, ModelParams& velocity, const std::vector<const TrainingSample*>& batch,
                         const TrainConfig& cfg, unsigned threads, double* grad_norm = nullptr) {
  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(batch.size());
  for (const auto* s : batch) inputs.push_back(s->inputs);
  ForwardResult fr = forward(params, inputs, true, threads);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<Eigen::MatrixXd> dlogits(batch.size());
  double loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CtcResult ctc = ctc_loss_grad(fr.logprobs[i], batch[i]->target);
    loss += ctc.loss;
    dlogits[i] = ctc.grad * inv_b;
  }
  ModelParams grads = backward(params, fr.cache, dlogits, threads);
  update_running_stats(params, fr.cache);
  const double norm = sgd_step(params, grads, velocity, cfg);
  if (grad_norm) *grad_norm = norm;
  return loss * inv_b;
}

/// Minibatch SGD over `train_set` for cfg.epochs epochs. After every epoch
/// the model is decoded on `holdout`; the returned params are those with the
/// best holdout accuracy (lower M-DTW breaks ties, then the earlier epoch).
/// With an empty holdout the final params are returned.
inline TrainResult train(ModelParams params, const std::vector<TrainingSample>& train_set,
                         const std::vector<TrainingSample>& holdout, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw InvalidConfig("training set is empty");
  check_feasible(train_set);
  check_feasible(holdout);
  const unsigned threads = cfg.threads ? cfg.threads : default_threads();

  ModelParams velocity = ModelParams::zeros(params.config);
  std::mt19937_64 rng(mix_seed(cfg.seed ^ 0x5eedULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_accuracy = -1;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0, norm_sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const TrainingSample*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set[order[k]]);
      double norm = 0;
      loss_sum += train_step(params, velocity, batch, cfg, threads, &norm) * static_cast<double>(batch.size());
      norm_sum += norm;
      ++steps;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_set.size());
    entry.grad_norm = norm_sum / static_cast<double>(steps);
    if (!holdout.empty()) {
      const HoldoutScore s = score(decode_all(params, holdout, cfg.beam_width, threads), holdout);
      entry.holdout_accuracy = s.accuracy;
      entry.holdout_mdtw = s.mdtw_mean;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    const bool improved = holdout.empty() || entry.holdout_accuracy > result.best_accuracy ||
                          (entry.holdout_accuracy == result.best_accuracy && entry.holdout_mdtw < result.best_mdtw);
    if (improved) {
      result.best = params;
      result.best_epoch = epoch;
      result.best_accuracy = entry.holdout_accuracy;
      result.best_mdtw = entry.holdout_mdtw;
    }
  }
  return result;
}

}  // namespace headgest
