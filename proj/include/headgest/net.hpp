#pragma once

// Stacked bidirectional GRU decoder.
//
//   input (T x 198)
//     -> L x [forward GRU + time-reversed GRU, outputs summed]   (T x H)
//     -> batch normalisation per feature over all frames of the batch
//     -> affine head (H -> 10) -> log-softmax                    (T x 10)
//
// Internally sequences are stored feature-major (features x time) so a
// time step is a contiguous column.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "headgest/ctc.hpp"
#include "headgest/error.hpp"
#include "headgest/parallel.hpp"
#include "headgest/synth.hpp"

namespace headgest {

struct NetConfig {
  int num_layers = 2;
  int hidden = 64;
  int input_dim = kEmbeddingDim;
  int classes = kNumClasses;
  int subsample_stride = 10;

  /// Small enough to train on a laptop CPU in minutes.
  static NetConfig desk() { return {}; }
  /// Twenty stacked bidirectional layers of width 512.
  static NetConfig full() { return {20, 512, kEmbeddingDim, kNumClasses, 10}; }

  void validate() const {
    if (num_layers < 1 || hidden < 1 || input_dim < 1 || subsample_stride < 1) {
      throw InvalidConfig("network dimensions must be positive");
    }
    if (classes != kNumClasses) throw InvalidConfig("the decoder has exactly 10 output classes");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// One GRU direction. Gate rows are stacked [update z; reset r; candidate].
struct GruDirection {
  Eigen::MatrixXd W;  // 3H x in
  Eigen::MatrixXd U;  // 3H x H
  Eigen::VectorXd b;  // 3H
};

struct GruLayer {
  GruDirection fwd;
  GruDirection bwd;
};

struct BatchNormParams {
  static constexpr double eps = 1e-5;
  static constexpr double momentum = 0.1;
  Eigen::VectorXd gain;
  Eigen::VectorXd bias;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

/// All weights of the decoder. The same type holds gradients and optimiser
/// velocity; running statistics are ignored there.
struct ModelParams {
  NetConfig config;
  std::vector<GruLayer> layers;
  BatchNormParams bn;
  Eigen::MatrixXd head_w;  // C x H
  Eigen::VectorXd head_b;  // C

  static ModelParams zeros(const NetConfig& cfg) {
    cfg.validate();
    const auto H = static_cast<Eigen::Index>(cfg.hidden);
    ModelParams p;
    p.config = cfg;
    p.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const Eigen::Index in = l == 0 ? cfg.input_dim : H;
      for (GruDirection* d : {&p.layers[l].fwd, &p.layers[l].bwd}) {
        d->W = Eigen::MatrixXd::Zero(3 * H, in);
        d->U = Eigen::MatrixXd::Zero(3 * H, H);
        d->b = Eigen::VectorXd::Zero(3 * H);
      }
    }
    p.bn.gain = Eigen::VectorXd::Zero(H);
    p.bn.bias = Eigen::VectorXd::Zero(H);
    p.bn.running_mean = Eigen::VectorXd::Zero(H);
    p.bn.running_var = Eigen::VectorXd::Zero(H);
    p.head_w = Eigen::MatrixXd::Zero(cfg.classes, H);
    p.head_b = Eigen::VectorXd::Zero(cfg.classes);
    return p;
  }

  /// Weights uniform in +-1/sqrt(hidden), biases zero, batch norm identity.
  static ModelParams init(const NetConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    std::mt19937_64 rng(mix_seed(seed));
    const double k = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    std::uniform_real_distribution<double> u(-k, k);
    auto fill = [&](Eigen::MatrixXd& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    for (auto& layer : p.layers) {
      for (GruDirection* d : {&layer.fwd, &layer.bwd}) {
        fill(d->W);
        fill(d->U);
      }
    }
    fill(p.head_w);
    p.bn.gain.setOnes();
    p.bn.running_var.setOnes();
    return p;
  }
};

/// Visits the trainable tensors of several same-shaped ModelParams in
/// lockstep: fn(name, tensor_of_first, tensor_of_second, ...). The order
/// is fixed and is also the on-disk order.
template <class Fn, class... Ps>
void zip_trainable(Fn&& fn, Ps&... ps) {
  const auto& first = std::get<0>(std::tie(ps...));
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    const std::string prefix = "gru." + std::to_string(l) + ".";
    fn(prefix + "fwd.W", ps.layers[l].fwd.W...);
    fn(prefix + "fwd.U", ps.layers[l].fwd.U...);
    fn(prefix + "fwd.b", ps.layers[l].fwd.b...);
    fn(prefix + "bwd.W", ps.layers[l].bwd.W...);
    fn(prefix + "bwd.U", ps.layers[l].bwd.U...);
    fn(prefix + "bwd.b", ps.layers[l].bwd.b...);
  }
  fn(std::string("bn.gain"), ps.bn.gain...);
  fn(std::string("bn.bias"), ps.bn.bias...);
  fn(std::string("head.W"), ps.head_w...);
  fn(std::string("head.b"), ps.head_b...);
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  zip_trainable([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); }, p);
  return n;
}

/// Keeps rows 0, stride, 2*stride, ...
inline Eigen::MatrixXd subsample(const Eigen::MatrixXd& frames, int stride) {
  if (stride < 1) throw InvalidConfig("stride must be >= 1");
  const Eigen::Index n = (frames.rows() + stride - 1) / stride;
  Eigen::MatrixXd out(n, frames.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = frames.row(i * stride);
  return out;
}

namespace detail {

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); }

}  // namespace detail

/// One GRU step: h = (1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h).
inline Eigen::VectorXd gru_cell(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& h_prev,
                                const GruDirection& d) {
  const Eigen::Index H = d.U.cols();
  if (d.W.rows() != 3 * H || d.U.rows() != 3 * H || d.b.size() != 3 * H || x.size() != d.W.cols() ||
      h_prev.size() != H) {
    throw ShapeMismatch("gru_cell: inconsistent shapes");
  }
  const Eigen::VectorXd xw = d.W * x + d.b;
  const Eigen::VectorXd zr_pre = xw.head(2 * H) + d.U.topRows(2 * H) * h_prev;
  const Eigen::ArrayXd z = detail::sigmoid(zr_pre.head(H).array());
  const Eigen::ArrayXd r = detail::sigmoid(zr_pre.tail(H).array());
  const Eigen::VectorXd rh = (r * h_prev.array()).matrix();
  const Eigen::ArrayXd cand = (xw.tail(H) + d.U.bottomRows(H) * rh).array().tanh();
  return ((1.0 - z) * h_prev.array() + z * cand).matrix();
}

// ---------------------------------------------------------------------------
// Forward

struct DirectionCache {
  Eigen::MatrixXd z, r, cand, h;  // H x T, indexed by time (not processing order)
};

struct LayerCache {
  Eigen::MatrixXd input;  // in x T
  DirectionCache fwd, bwd;
};

struct SampleCache {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd top;         // H x T, summed output of the top layer
  Eigen::MatrixXd normalized;  // H x T, batch-normalised before gain/bias
};

struct BatchCache {
  bool training = false;
  std::vector<SampleCache> samples;
  Eigen::VectorXd mean;
  Eigen::VectorXd var;      // biased batch variance
  Eigen::VectorXd inv_std;  // 1 / sqrt(var + eps), or running equivalent
  Eigen::Index frames = 0;
};

struct ForwardResult {
  std::vector<LogProbMatrix> logprobs;  // per sample, T x C
  BatchCache cache;
};

namespace detail {

/// Runs one direction over X (in x T). reverse = process t = T-1 .. 0.
inline void run_direction(const GruDirection& d, const Eigen::MatrixXd& X, bool reverse, DirectionCache& c) {
  const Eigen::Index H = d.U.cols();
  const Eigen::Index T = X.cols();
  Eigen::MatrixXd xw = d.W * X;
  xw.colwise() += d.b;
  c.z.resize(H, T);
  c.r.resize(H, T);
  c.cand.resize(H, T);
  c.h.resize(H, T);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd zr(2 * H), rh(H);
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index t = reverse ? T - 1 - step : step;
    zr.noalias() = d.U.topRows(2 * H) * h;
    zr += xw.col(t).head(2 * H);
    c.z.col(t) = sigmoid(zr.head(H).array()).matrix();
    c.r.col(t) = sigmoid(zr.tail(H).array()).matrix();
    rh = (c.r.col(t).array() * h.array()).matrix();
    c.cand.col(t).noalias() = d.U.bottomRows(H) * rh;
    c.cand.col(t) = (c.cand.col(t) + xw.col(t).tail(H)).array().tanh().matrix();
    h = ((1.0 - c.z.col(t).array()) * h.array() + c.z.col(t).array() * c.cand.col(t).array()).matrix();
    c.h.col(t) = h;
  }
}

inline Eigen::MatrixXd run_stack(const ModelParams& p, const Eigen::MatrixXd& input_TxD, SampleCache& sc) {
  if (input_TxD.cols() != p.config.input_dim) {
    throw ShapeMismatch("input has " + std::to_string(input_TxD.cols()) + " features, model expects " +
                        std::to_string(p.config.input_dim));
  }
  if (input_TxD.rows() < 1) throw ShapeMismatch("input sequence is empty");
  sc.layers.resize(p.layers.size());
  Eigen::MatrixXd x = input_TxD.transpose();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    LayerCache& lc = sc.layers[l];
    lc.input = std::move(x);
    run_direction(p.layers[l].fwd, lc.input, false, lc.fwd);
    run_direction(p.layers[l].bwd, lc.input, true, lc.bwd);
    x = lc.fwd.h + lc.bwd.h;
  }
  return x;
}

inline LogProbMatrix head_logprobs(const ModelParams& p, const Eigen::MatrixXd& normalized) {
  Eigen::MatrixXd zbn = (normalized.array().colwise() * p.bn.gain.array()).matrix();
  zbn.colwise() += p.bn.bias;
  Eigen::MatrixXd logits = p.head_w * zbn;
  logits.colwise() += p.head_b;
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    const double m = logits.col(t).maxCoeff();
    const double lse = m + std::log((logits.col(t).array() - m).exp().sum());
    logits.col(t).array() -= lse;
  }
  if (!logits.allFinite()) throw NonFiniteActivation("non-finite log-probabilities; training diverged?");
  return logits.transpose();
}

}  // namespace detail

/// Batched forward pass. In training mode batch-norm statistics come from
/// all frames of the batch; in eval mode from the running estimates, which
/// makes each sample independent of the others.
inline ForwardResult forward(const ModelParams& p, const std::vector<Eigen::MatrixXd>& inputs, bool training,
                             unsigned threads = 1) {
  const Eigen::Index H = p.config.hidden;
  ForwardResult out;
  BatchCache& bc = out.cache;
  bc.training = training;
  bc.samples.resize(inputs.size());
  parallel_chunks(inputs.size(), threads, [&](unsigned, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) bc.samples[i].top = detail::run_stack(p, inputs[i], bc.samples[i]);
  });

  if (training) {
    bc.mean = Eigen::VectorXd::Zero(H);
    bc.frames = 0;
    for (const auto& s : bc.samples) {
      bc.mean += s.top.rowwise().sum();
      bc.frames += s.top.cols();
    }
    if (bc.frames == 0) throw ShapeMismatch("empty batch");
    bc.mean /= static_cast<double>(bc.frames);
    bc.var = Eigen::VectorXd::Zero(H);
    for (const auto& s : bc.samples) bc.var += (s.top.colwise() - bc.mean).array().square().rowwise().sum().matrix();
    bc.var /= static_cast<double>(bc.frames);
    bc.inv_std = (bc.var.array() + BatchNormParams::eps).rsqrt().matrix();
  } else {
    bc.mean = p.bn.running_mean;
    bc.var = p.bn.running_var;
    bc.inv_std = (p.bn.running_var.array() + BatchNormParams::eps).rsqrt().matrix();
  }

  out.logprobs.resize(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    SampleCache& s = bc.samples[i];
    s.normalized = ((s.top.colwise() - bc.mean).array().colwise() * bc.inv_std.array()).matrix();
    out.logprobs[i] = detail::head_logprobs(p, s.normalized);
  }
  return out;
}

/// Eval-mode forward of a single sequence.
inline LogProbMatrix infer(const ModelParams& p, const Eigen::MatrixXd& input) {
  return forward(p, {input}, false).logprobs.front();
}

/// Folds the batch statistics of a training forward into the running estimates.
inline void update_running_stats(ModelParams& p, const BatchCache& bc) {
  if (!bc.training) return;
  const double n = static_cast<double>(bc.frames);
  const Eigen::VectorXd unbiased = n > 1 ? Eigen::VectorXd(bc.var * (n / (n - 1))) : bc.var;
  const double m = BatchNormParams::momentum;
  p.bn.running_mean = (1 - m) * p.bn.running_mean + m * bc.mean;
  p.bn.running_var = (1 - m) * p.bn.running_var + m * unbiased;
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

/// Backprop through one direction. dH (H x T) is the gradient w.r.t. this
/// direction's outputs; accumulates parameter grads into g and returns dX.
inline Eigen::MatrixXd backprop_direction(const GruDirection& d, const Eigen::MatrixXd& X, const DirectionCache& c,
                                          bool reverse, const Eigen::MatrixXd& dH, GruDirection& g) {
  const Eigen::Index H = d.U.cols();
  const Eigen::Index T = X.cols();
  Eigen::MatrixXd dA(3 * H, T);
  Eigen::MatrixXd hprev(H, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index src = reverse ? t + 1 : t - 1;
    if (src < 0 || src >= T) hprev.col(t).setZero();
    else hprev.col(t) = c.h.col(src);
  }

  Eigen::VectorXd carry = Eigen::VectorXd::Zero(H);
  Eigen::ArrayXd dh(H), dhp(H), da_h(H), d_rh(H), dr(H), dz(H);
  for (Eigen::Index step = T - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? T - 1 - step : step;
    const auto z = c.z.col(t).array();
    const auto r = c.r.col(t).array();
    const auto cand = c.cand.col(t).array();
    const auto hp = hprev.col(t).array();

    dh = dH.col(t).array() + carry.array();
    dz = dh * (cand - hp);
    dhp = dh * (1.0 - z);
    da_h = dh * z * (1.0 - cand.square());
    d_rh = (d.U.bottomRows(H).transpose() * da_h.matrix()).array();
    dr = d_rh * hp;
    dhp += d_rh * r;

    dA.col(t).head(H) = (dz * z * (1.0 - z)).matrix();
    dA.col(t).segment(H, H) = (dr * r * (1.0 - r)).matrix();
    dA.col(t).tail(H) = da_h.matrix();
    carry = dhp.matrix();
    carry.noalias() += d.U.topRows(2 * H).transpose() * dA.col(t).head(2 * H);
  }

  g.W.noalias() += dA * X.transpose();
  g.b += dA.rowwise().sum();
  g.U.topRows(2 * H).noalias() += dA.topRows(2 * H) * hprev.transpose();
  const Eigen::MatrixXd rh = (c.r.array() * hprev.array()).matrix();
  g.U.bottomRows(H).noalias() += dA.bottomRows(H) * rh.transpose();
  return d.W.transpose() * dA;
}

inline void backprop_stack(const ModelParams& p, const SampleCache& sc, Eigen::MatrixXd dY, ModelParams& g) {
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const LayerCache& lc = sc.layers[l];
    Eigen::MatrixXd dX = backprop_direction(p.layers[l].fwd, lc.input, lc.fwd, false, dY, g.layers[l].fwd);
    dX += backprop_direction(p.layers[l].bwd, lc.input, lc.bwd, true, dY, g.layers[l].bwd);
    dY = std::move(dX);
  }
}

inline void add_into(ModelParams& acc, const ModelParams& part) {
  zip_trainable([](const std::string&, auto& a, const auto& b) { a += b; }, acc, part);
}

}  // namespace detail

/// Exact gradients of sum_i loss_i given dlogits[i] = d loss_i / d logits_i
/// (T_i x C; the CTC gradient is already in this form). Requires the cache
/// of a training-mode forward.
inline ModelParams backward(const ModelParams& p, const BatchCache& bc, const std::vector<Eigen::MatrixXd>& dlogits,
                            unsigned threads = 1) {
  if (dlogits.size() != bc.samples.size()) throw ShapeMismatch("one logit gradient per sample required");
  ModelParams g = ModelParams::zeros(p.config);
  const Eigen::Index H = p.config.hidden;

  // Head and batch-norm parameters; collect batch sums for the BN input grad.
  std::vector<Eigen::MatrixXd> dxhat(bc.samples.size());
  Eigen::VectorXd sum_dxhat = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd sum_dxhat_xhat = Eigen::VectorXd::Zero(H);
  for (std::size_t i = 0; i < bc.samples.size(); ++i) {
    const SampleCache& s = bc.samples[i];
    const Eigen::MatrixXd dl = dlogits[i].transpose();  // C x T
    if (dl.cols() != s.normalized.cols() || dl.rows() != p.config.classes) {
      throw ShapeMismatch("logit gradient shape does not match forward output");
    }
    Eigen::MatrixXd zbn = (s.normalized.array().colwise() * p.bn.gain.array()).matrix();
    zbn.colwise() += p.bn.bias;
    g.head_w.noalias() += dl * zbn.transpose();
    g.head_b += dl.rowwise().sum();
    const Eigen::MatrixXd dz = p.head_w.transpose() * dl;  // H x T
    g.bn.gain += (dz.array() * s.normalized.array()).rowwise().sum().matrix();
    g.bn.bias += dz.rowwise().sum();
    dxhat[i] = (dz.array().colwise() * p.bn.gain.array()).matrix();
    sum_dxhat += dxhat[i].rowwise().sum();
    sum_dxhat_xhat += (dxhat[i].array() * s.normalized.array()).rowwise().sum().matrix();
  }

  std::vector<Eigen::MatrixXd> dtop(bc.samples.size());
  for (std::size_t i = 0; i < bc.samples.size(); ++i) {
    const SampleCache& s = bc.samples[i];
    if (bc.training) {
      const double n = static_cast<double>(bc.frames);
      Eigen::ArrayXXd d = dxhat[i].array() * n;
      d.colwise() -= sum_dxhat.array();
      d -= s.normalized.array().colwise() * sum_dxhat_xhat.array();
      dtop[i] = (d.colwise() * (bc.inv_std.array() / n)).matrix();
    } else {
      dtop[i] = (dxhat[i].array().colwise() * bc.inv_std.array()).matrix();
    }
  }

  const unsigned chunks = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(bc.samples.size())));
  std::vector<ModelParams> partial(chunks);
  parallel_chunks(bc.samples.size(), chunks, [&](unsigned c, std::size_t lo, std::size_t hi) {
    partial[c] = ModelParams::zeros(p.config);
    for (std::size_t i = lo; i < hi; ++i) detail::backprop_stack(p, bc.samples[i], dtop[i], partial[c]);
  });
  for (const auto& part : partial) {
    if (!part.layers.empty()) {
      for (std::size_t l = 0; l < g.layers.size(); ++l) {
        for (auto [dst, src] : {std::pair{&g.layers[l].fwd, &part.layers[l].fwd}, std::pair{&g.layers[l].bwd, &part.layers[l].bwd}}) {
          dst->W += src->W;
          dst->U += src->U;
          dst->b += src->b;
        }
      }
    }
  }
  return g;
}

}  // namespace headgest
