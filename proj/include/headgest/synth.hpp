#pragma once

// Synthetic head-pose traces. A user "types" a cluster sequence by turning
// the head from the keyboard centre towards each cluster in turn, holding
// briefly on each. The resulting Euler-angle trace is turned into the same
// 198-wide soft-bin embedding a binned head-pose classifier would emit.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "headgest/error.hpp"
#include "headgest/keyboard.hpp"

namespace headgest {

struct SyntheticUserProfile {
  double yaw_span = 20.0;       // degrees, half-range of horizontal turn
  double pitch_span = 15.0;     // degrees
  double dwell_ms = 650.0;      // hold time on each cluster
  double transition_ms = 450.0; // move time between clusters
  double noise_std = 1.0;       // degrees of per-frame jitter
  std::uint64_t seed = 1;

  void validate() const {
    if (!(yaw_span > 0 && yaw_span <= 90)) throw InvalidProfile("yaw_span must be in (0, 90]");
    if (!(pitch_span > 0 && pitch_span <= 90)) throw InvalidProfile("pitch_span must be in (0, 90]");
    if (!(dwell_ms > 0)) throw InvalidProfile("dwell_ms must be positive");
    if (!(transition_ms > 0)) throw InvalidProfile("transition_ms must be positive");
    if (!(noise_std >= 0)) throw InvalidProfile("noise_std must be non-negative");
  }
};

struct PoseFrame {
  double yaw = 0;
  double pitch = 0;
  double roll = 0;
};

struct PoseTrace {
  double fps = 30.0;
  std::vector<PoseFrame> frames;
};

/// Uniform 3-degree bins over [-99, +99).
struct AngleBinning {
  static constexpr double lo = -99.0;
  static constexpr double hi = 99.0;
  static constexpr int bins = 66;
  static constexpr double width = (hi - lo) / bins;

  static constexpr double center(int i) noexcept { return lo + width * i + width / 2; }
};
static_assert(AngleBinning::width == 3.0);

inline constexpr int kEmbeddingDim = 3 * AngleBinning::bins;
inline constexpr double kMaxEmittedAngle = 98.9;
inline constexpr double kDefaultBinSigma = 3.0;

/// splitmix64 finaliser, used to derive independent per-sample streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct YawPitch {
  double yaw;
  double pitch;
};

inline YawPitch target_pose(ClusterId c, const SyntheticUserProfile& profile) {
  const GridCoord g = coord_of(c);
  return {(g.col - 1) * profile.yaw_span, (1 - g.row) * profile.pitch_span};
}

namespace detail {

inline double ease(double u) { return 0.5 * (1.0 - std::cos(std::numbers::pi * u)); }

// Repeating a cluster is made visible by a short re-gesture: the head
// dips halfway back towards the centre and returns. The centre cluster
// nods downward instead.
inline YawPitch regesture(YawPitch at, double u, const SyntheticUserProfile& p) {
  const double bump = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u));
  if (at.yaw == 0.0 && at.pitch == 0.0) return {0.0, -0.5 * p.pitch_span * bump};
  return {at.yaw * (1.0 - 0.5 * bump), at.pitch * (1.0 - 0.5 * bump)};
}

inline double clamp_angle(double a) { return std::clamp(a, -kMaxEmittedAngle, kMaxEmittedAngle); }

}  // namespace detail

/// Time layout of a generated trace, shared by the generator and tests.
struct TraceTiming {
  double segment_ms;
  double transition_ms;
  std::size_t num_frames;

  /// Segment (cluster index) and the offset into it for frame k.
  std::pair<std::size_t, double> locate(std::size_t k, double fps, std::size_t num_segments) const {
    const double t_ms = 1000.0 * static_cast<double>(k) / fps;
    auto seg = static_cast<std::size_t>(t_ms / segment_ms);
    if (seg >= num_segments) seg = num_segments - 1;
    return {seg, t_ms - segment_ms * static_cast<double>(seg)};
  }
};

inline TraceTiming trace_timing(std::size_t num_clusters, const SyntheticUserProfile& p, double fps) {
  const double seg = p.transition_ms + p.dwell_ms;
  const double total_s = static_cast<double>(num_clusters) * seg / 1000.0;
  const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(total_s * fps)));
  return {seg, p.transition_ms, frames};
}

/// Trace for `seq`; jitter is drawn from a stream seeded with `stream_seed`.
inline PoseTrace generate_trace(const ClusterSequence& seq, const SyntheticUserProfile& profile, double fps,
                                std::uint64_t stream_seed) {
  profile.validate();
  if (seq.empty()) throw EmptyText("cannot generate a trace for an empty cluster sequence");
  if (!(fps > 0)) throw InvalidProfile("fps must be positive");

  const TraceTiming timing = trace_timing(seq.size(), profile, fps);
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  PoseTrace trace;
  trace.fps = fps;
  trace.frames.reserve(timing.num_frames);
  for (std::size_t k = 0; k < timing.num_frames; ++k) {
    const auto [seg, local] = timing.locate(k, fps, seq.size());
    const YawPitch to = target_pose(seq[seg], profile);
    YawPitch pos = to;
    if (local < timing.transition_ms) {
      const double u = local / timing.transition_ms;
      if (seg > 0 && seq[seg - 1] == seq[seg]) {
        pos = detail::regesture(to, u, profile);
      } else {
        const YawPitch from = seg == 0 ? YawPitch{0.0, 0.0} : target_pose(seq[seg - 1], profile);
        const double e = detail::ease(u);
        pos = {from.yaw + (to.yaw - from.yaw) * e, from.pitch + (to.pitch - from.pitch) * e};
      }
    }
    PoseFrame f{pos.yaw, pos.pitch, 0.0};
    if (profile.noise_std > 0) {
      f.yaw += profile.noise_std * jitter(rng);
      f.pitch += profile.noise_std * jitter(rng);
      f.roll += profile.noise_std * jitter(rng);
    }
    trace.frames.push_back({detail::clamp_angle(f.yaw), detail::clamp_angle(f.pitch), detail::clamp_angle(f.roll)});
  }
  return trace;
}

inline PoseTrace generate_trace(const ClusterSequence& seq, const SyntheticUserProfile& profile, double fps = 30.0) {
  return generate_trace(seq, profile, fps, profile.seed);
}

inline void check_angle(double angle) {
  if (!(std::abs(angle) < AngleBinning::hi)) {
    throw AngleOutOfRange("angle " + std::to_string(angle) + " outside (-99, 99) degrees");
  }
}

/// Soft posterior over the 66 bins: a Gaussian bump of width `sigma`
/// evaluated at bin centres. sigma == 0 gives the hard bin floor((a+99)/3).
inline Eigen::VectorXd bin_embed(double angle, double sigma = kDefaultBinSigma) {
  check_angle(angle);
  if (sigma < 0) throw InvalidConfig("bin sigma must be non-negative");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(AngleBinning::bins);
  if (sigma == 0) {
    const int bin = static_cast<int>(std::floor((angle - AngleBinning::lo) / AngleBinning::width));
    p[std::clamp(bin, 0, AngleBinning::bins - 1)] = 1.0;
    return p;
  }
  // Log-domain with max-shift so tiny sigmas do not underflow to 0/0.
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < AngleBinning::bins; ++i) {
    const double d = (angle - AngleBinning::center(i)) / sigma;
    p[i] = -0.5 * d * d;
    best = std::max(best, p[i]);
  }
  p = (p.array() - best).exp();
  return p / p.sum();
}

inline double expected_angle(const Eigen::Ref<const Eigen::VectorXd>& block) {
  if (block.size() != AngleBinning::bins) throw NotAProbabilityBlock("block must have 66 entries");
  if ((block.array() < 0).any() || !block.allFinite() || std::abs(block.sum() - 1.0) > 1e-6) {
    throw NotAProbabilityBlock("block is not a probability distribution");
  }
  double mean = 0;
  for (int i = 0; i < AngleBinning::bins; ++i) mean += block[i] * AngleBinning::center(i);
  return mean;
}

/// T x 198 matrix: yaw block, pitch block, roll block per frame.
inline Eigen::MatrixXd embed_trace(const PoseTrace& trace, double sigma = kDefaultBinSigma) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(trace.frames.size()), kEmbeddingDim);
  for (std::size_t t = 0; t < trace.frames.size(); ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    const PoseFrame& f = trace.frames[t];
    out.row(row).segment(0, AngleBinning::bins) = bin_embed(f.yaw, sigma).transpose();
    out.row(row).segment(AngleBinning::bins, AngleBinning::bins) = bin_embed(f.pitch, sigma).transpose();
    out.row(row).segment(2 * AngleBinning::bins, AngleBinning::bins) = bin_embed(f.roll, sigma).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace files: "t,yaw,pitch,roll", seconds and degrees, six decimals.

inline std::string format_trace_csv(const PoseTrace& trace) {
  std::string out = "t,yaw,pitch,roll\n";
  char line[128];
  for (std::size_t k = 0; k < trace.frames.size(); ++k) {
    const PoseFrame& f = trace.frames[k];
    const int n = std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f\n", static_cast<double>(k) / trace.fps,
                                f.yaw, f.pitch, f.roll);
    out.append(line, static_cast<std::size_t>(n));
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const PoseTrace& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  os << format_trace_csv(trace);
}

namespace detail {

inline double parse_double(std::string_view s, std::size_t line_no) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a trace; fps is recovered from the first time step (30 if single-row).
inline PoseTrace parse_trace_csv(std::string_view text) {
  PoseTrace trace;
  std::vector<double> times;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("t,", 0) == 0) {
      if (line != "t,yaw,pitch,roll") throw ParseError("unexpected trace header '" + std::string(line) + "'");
      continue;
    }
    double cols[4];
    for (int c = 0; c < 4; ++c) {
      const auto comma = line.find(',');
      if ((c < 3) == (comma == std::string_view::npos)) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 4 columns");
      }
      cols[c] = detail::parse_double(line.substr(0, comma), line_no);
      line = comma == std::string_view::npos ? std::string_view{} : line.substr(comma + 1);
    }
    for (int c = 1; c < 4; ++c) check_angle(cols[c]);
    times.push_back(cols[0]);
    trace.frames.push_back({cols[1], cols[2], cols[3]});
  }
  if (trace.frames.empty()) throw ParseError("trace has no frames");
  if (times.size() >= 2) {
    const double dt = times[1] - times[0];
    if (!(dt > 0)) throw ParseError("trace timestamps must increase");
    trace.fps = std::round(1.0 / dt * 1000.0) / 1000.0;
  }
  return trace;
}

inline PoseTrace read_trace_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open trace " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_trace_csv(ss.str());
}

// ---------------------------------------------------------------------------
// Datasets

struct GeneratedSample {
  std::string id;
  std::string text;
  ClusterSequence clusters;
  std::size_t profile = 0;  // index into the profile list
  int iteration = 1;        // 1-based repetition number
  PoseTrace trace;
};

/// Draws `count` user profiles spread over plausible head-turn styles.
inline std::vector<SyntheticUserProfile> random_profiles(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> yaw(12.0, 30.0), pitch(9.0, 22.0), dwell(450.0, 900.0),
      transition(300.0, 600.0), noise(0.3, 2.0);
  std::vector<SyntheticUserProfile> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& p = out[i];
    p.yaw_span = yaw(rng);
    p.pitch_span = pitch(rng);
    p.dwell_ms = dwell(rng);
    p.transition_ms = transition(rng);
    p.noise_std = noise(rng);
    p.seed = mix_seed(seed + 0x1000 + i);
  }
  return out;
}

/// One sample per (text, profile, iteration), ordered text-major within
/// each profile and iteration. Each sample's jitter stream depends only on
/// the profile seed and the sample's index.
inline std::vector<GeneratedSample> make_dataset(const std::vector<std::string>& corpus,
                                                 const std::vector<SyntheticUserProfile>& profiles, int iterations,
                                                 double fps = 30.0,
                                                 const KeyboardLayout& layout = KeyboardLayout::standard()) {
  if (corpus.empty()) throw InvalidConfig("corpus must not be empty");
  if (profiles.empty()) throw InvalidConfig("at least one profile is required");
  if (iterations < 1) throw InvalidConfig("iterations must be >= 1");

  std::vector<ClusterSequence> encoded;
  encoded.reserve(corpus.size());
  for (const auto& text : corpus) encoded.push_back(encode_text(text, layout));

  std::vector<GeneratedSample> out;
  out.reserve(corpus.size() * profiles.size() * static_cast<std::size_t>(iterations));
  std::size_t index = 0;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    for (int it = 1; it <= iterations; ++it) {
      for (std::size_t w = 0; w < corpus.size(); ++w, ++index) {
        char id[64];
        std::snprintf(id, sizeof id, "p%02zu_i%d_w%02zu", p + 1, it, w + 1);
        GeneratedSample s;
        s.id = id;
        s.text = corpus[w];
        s.clusters = encoded[w];
        s.profile = p;
        s.iteration = it;
        s.trace = generate_trace(s.clusters, profiles[p], fps, mix_seed(profiles[p].seed ^ mix_seed(index)));
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace headgest
