#pragma once

// End-to-end commands behind the `headgest` CLI: dataset generation,
// train/test splits, training, evaluation, lexicon statistics and the
// decode request handler shared by the CLI and the HTTP service.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "headgest/ctc.hpp"
#include "headgest/keyboard.hpp"
#include "headgest/lexicon.hpp"
#include "headgest/metrics.hpp"
#include "headgest/model_io.hpp"
#include "headgest/net.hpp"
#include "headgest/synth.hpp"
#include "headgest/train.hpp"

namespace headgest {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Corpus

/// The 20 words typed by every participant of the recorded study.
inline const std::vector<std::string>& study_words() {
  static const std::vector<std::string> words = {"locate", "single", "family", "would", "place", "large", "work",
                                                 "take",   "live",   "box",    "method", "listen", "house", "learn",
                                                 "come",   "some",   "ice",    "old",   "fly",    "leg"};
  return words;
}

/// Words, then the ten phrases, then the five sentences (35 texts).
inline const std::vector<std::string>& study_corpus() {
  static const std::vector<std::string> corpus = [] {
    std::vector<std::string> c = study_words();
    for (const char* s : {"hello", "excuse me", "i am sorry", "thank you", "good bye", "see you", "nice to meet you",
                          "you are welcome", "how are you", "have a good time", "i never gave up", "best time to live",
                          "catch the trade winds", "hear a voice within you", "he will forget it"}) {
      c.emplace_back(s);
    }
    return c;
  }();
  return corpus;
}

inline std::string default_word_list_path() { return std::string(HEADGEST_DATA_DIR) + "/google-10000-english.txt"; }

// ---------------------------------------------------------------------------
// JSON helpers

inline json to_json(const SyntheticUserProfile& p) {
  return {{"yaw_span", p.yaw_span}, {"pitch_span", p.pitch_span}, {"dwell_ms", p.dwell_ms},
          {"transition_ms", p.transition_ms}, {"noise_std", p.noise_std}, {"seed", p.seed}};
}

inline SyntheticUserProfile profile_from_json(const json& j) {
  SyntheticUserProfile p;
  p.yaw_span = j.value("yaw_span", p.yaw_span);
  p.pitch_span = j.value("pitch_span", p.pitch_span);
  p.dwell_ms = j.value("dwell_ms", p.dwell_ms);
  p.transition_ms = j.value("transition_ms", p.transition_ms);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

inline json to_json(const NetConfig& c) {
  return {{"num_layers", c.num_layers}, {"hidden", c.hidden}, {"input_dim", c.input_dim}, {"classes", c.classes},
          {"subsample_stride", c.subsample_stride}};
}

inline NetConfig net_config_from_json(const json& j) {
  NetConfig c = j.value("preset", std::string("desk")) == "full" ? NetConfig::full() : NetConfig::desk();
  c.num_layers = j.value("num_layers", c.num_layers);
  c.hidden = j.value("hidden", c.hidden);
  c.input_dim = j.value("input_dim", c.input_dim);
  c.classes = j.value("classes", c.classes);
  c.subsample_stride = j.value("subsample_stride", c.subsample_stride);
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},         {"momentum", c.momentum},     {"nesterov", c.nesterov},
          {"clip_max_norm", c.clip_max_norm}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"seed", c.seed},     {"beam_width", c.beam_width}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.nesterov = j.value("nesterov", c.nesterov);
  c.clip_max_norm = j.value("clip_max_norm", c.clip_max_norm);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.beam_width = j.value("beam_width", c.beam_width);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidConfig("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(path + ": " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidConfig("cannot open " + path.string() + " for writing");
  os << text;
}

/// Cluster-to-letters map served to the demo UI.
inline json layout_json(const KeyboardLayout& layout = KeyboardLayout::standard()) {
  json clusters = json::object();
  for (int c = 1; c <= kNumClusters; ++c) clusters[std::to_string(c)] = layout.letters_of(ClusterId(c));
  return {{"clusters", clusters}};
}

// ---------------------------------------------------------------------------
// Dataset generation

struct GenConfig {
  std::string corpus_name = "study";
  std::vector<std::string> corpus = study_corpus();
  std::vector<SyntheticUserProfile> profiles = random_profiles(22, 2020);
  int iterations = 3;
  std::uint64_t seed = 2020;
  double fps = 30.0;

  /// Keys: corpus ("study" | "study-words" | [texts]), profiles (count or
  /// explicit list), iterations, seed, fps.
  static GenConfig from_json(const json& j) {
    GenConfig g;
    try {
      g.seed = j.value("seed", g.seed);
      g.iterations = j.value("iterations", g.iterations);
      g.fps = j.value("fps", g.fps);
      if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        if (c.is_string()) {
          g.corpus_name = c.get<std::string>();
          if (g.corpus_name == "study") g.corpus = study_corpus();
          else if (g.corpus_name == "study-words") g.corpus = study_words();
          else throw InvalidConfig("unknown corpus '" + g.corpus_name + "'");
        } else {
          g.corpus_name = "custom";
          g.corpus = c.get<std::vector<std::string>>();
        }
      }
      const json profiles = j.value("profiles", json(22));
      if (profiles.is_number_integer()) {
        const int n = profiles.get<int>();
        if (n < 1) throw InvalidConfig("profiles must be >= 1");
        g.profiles = random_profiles(static_cast<std::size_t>(n), g.seed);
      } else {
        g.profiles.clear();
        for (const auto& p : profiles) g.profiles.push_back(profile_from_json(p));
      }
    } catch (const json::exception& e) {
      throw InvalidConfig(std::string("bad generation config: ") + e.what());
    } catch (const InvalidProfile& e) {
      throw InvalidConfig(std::string("bad profile: ") + e.what());
    }
    if (g.iterations < 1) throw InvalidConfig("iterations must be >= 1");
    if (!(g.fps > 0)) throw InvalidConfig("fps must be positive");
    if (g.corpus.empty()) throw InvalidConfig("corpus must not be empty");
    return g;
  }

  json to_json() const {
    json profs = json::array();
    for (const auto& p : profiles) profs.push_back(headgest::to_json(p));
    return {{"corpus", corpus}, {"corpus_name", corpus_name}, {"iterations", iterations},
            {"seed", seed},     {"fps", fps},                 {"profiles", profs}};
  }
};

struct ManifestEntry {
  std::string id;
  std::string text;
  ClusterSequence clusters;
  int profile = 1;  // 1-based
  int iteration = 1;
  std::string trace_path;  // relative to the manifest directory
};

inline json to_json(const ManifestEntry& e) {
  return {{"id", e.id},       {"text", e.text},           {"clusters", to_ints(e.clusters)},
          {"profile", e.profile}, {"iteration", e.iteration}, {"trace_path", e.trace_path}};
}

struct Manifest {
  fs::path dir;
  std::vector<ManifestEntry> entries;

  std::set<int> profiles() const {
    std::set<int> s;
    for (const auto& e : entries) s.insert(e.profile);
    return s;
  }
};

/// Writes traces/<id>.csv, manifest.json (array of samples) and
/// generation.json (the resolved config including profiles) under out_dir.
inline Manifest cmd_gen(const GenConfig& cfg, const fs::path& out_dir) {
  const auto samples = make_dataset(cfg.corpus, cfg.profiles, cfg.iterations, cfg.fps);
  fs::create_directories(out_dir / "traces");
  Manifest m;
  m.dir = out_dir;
  json arr = json::array();
  for (const auto& s : samples) {
    ManifestEntry e{s.id, s.text, s.clusters, static_cast<int>(s.profile) + 1, s.iteration, "traces/" + s.id + ".csv"};
    write_trace_csv((out_dir / e.trace_path).string(), s.trace);
    arr.push_back(to_json(e));
    m.entries.push_back(std::move(e));
  }
  write_text_file(out_dir / "manifest.json", arr.dump(2) + "\n");
  write_text_file(out_dir / "generation.json", cfg.to_json().dump(2) + "\n");
  return m;
}

/// Loads and validates a manifest: unique ids, clusters matching the text,
/// and every trace file present.
inline Manifest load_manifest(const fs::path& path) {
  const json arr = read_json_file(path.string());
  if (!arr.is_array()) throw InvalidConfig(path.string() + ": manifest must be a JSON array");
  Manifest m;
  m.dir = path.parent_path();
  std::set<std::string> ids;
  try {
    for (const auto& j : arr) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.text = j.at("text").get<std::string>();
      e.clusters = make_sequence(j.at("clusters").get<std::vector<int>>());
      e.profile = j.at("profile").get<int>();
      e.iteration = j.at("iteration").get<int>();
      e.trace_path = j.at("trace_path").get<std::string>();
      if (!ids.insert(e.id).second) throw InvalidConfig("duplicate sample id " + e.id);
      if (e.clusters != encode_text(e.text)) throw InvalidConfig("sample " + e.id + ": clusters do not match text");
      if (!fs::exists(m.dir / e.trace_path)) throw InvalidConfig("sample " + e.id + ": missing trace " + e.trace_path);
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(path.string() + ": " + e.what());
  }
  if (m.entries.empty()) throw InvalidConfig(path.string() + ": manifest has no samples");
  return m;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  enum class Scenario { intra, inter };
  Scenario scenario = Scenario::intra;
  int test_iteration = 3;              // intra: held-out repetition
  double test_fraction = 0.2;          // inter: share of profiles held out
  std::vector<int> test_profiles;      // inter: explicit override

  static SplitSpec intra(int test_iteration = 3) { return {Scenario::intra, test_iteration, 0.2, {}}; }
  static SplitSpec inter(double fraction = 0.2) { return {Scenario::inter, 3, fraction, {}}; }

  std::string name() const { return scenario == Scenario::intra ? "intra" : "inter"; }

  static SplitSpec parse(const std::string& s) {
    if (s == "intra") return intra();
    if (s == "inter") return inter();
    throw InvalidConfig("split must be 'intra' or 'inter', got '" + s + "'");
  }

  json to_json() const {
    json j = {{"scenario", name()}};
    if (scenario == Scenario::intra) j["test_iteration"] = test_iteration;
    else {
      j["test_fraction"] = test_fraction;
      if (!test_profiles.empty()) j["test_profiles"] = test_profiles;
    }
    return j;
  }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::set<int> test_profiles;
};

/// Partitions the manifest. Intra: same users, the held-out iteration is
/// tested. Inter: the last round(P * fraction) profiles (at least one) are
/// tested and never trained on. Overlap or an empty side is an error.
inline SplitIndices apply_split(const Manifest& m, const SplitSpec& split) {
  SplitIndices out;
  if (split.scenario == SplitSpec::Scenario::intra) {
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      (m.entries[i].iteration == split.test_iteration ? out.test : out.train).push_back(i);
    }
    std::set<int> train_iters, test_iters;
    for (auto i : out.train) train_iters.insert(m.entries[i].iteration);
    for (auto i : out.test) test_iters.insert(m.entries[i].iteration);
    for (int it : test_iters) {
      if (train_iters.count(it)) throw SplitError("intra split: iteration " + std::to_string(it) + " on both sides");
    }
  } else {
    const std::set<int> all = m.profiles();
    if (!split.test_profiles.empty()) {
      out.test_profiles.insert(split.test_profiles.begin(), split.test_profiles.end());
    } else {
      if (!(split.test_fraction > 0 && split.test_fraction < 1)) throw SplitError("test_fraction must be in (0, 1)");
      const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(split.test_fraction * static_cast<double>(all.size()))));
      auto it = all.end();
      for (std::size_t n = 0; n < k && it != all.begin(); ++n) out.test_profiles.insert(*--it);
    }
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      (out.test_profiles.count(m.entries[i].profile) ? out.test : out.train).push_back(i);
    }
    for (auto i : out.train) {
      if (out.test_profiles.count(m.entries[i].profile)) throw SplitError("inter split: profile on both sides");
    }
  }
  if (out.train.empty()) throw SplitError(split.name() + " split leaves no training samples");
  if (out.test.empty()) throw SplitError(split.name() + " split leaves no test samples");
  return out;
}

// ---------------------------------------------------------------------------
// Feature extraction

/// Subsampling stride for a trace recorded at `fps`; the model's stride is
/// defined at 30 fps.
inline int effective_stride(const NetConfig& c, double fps) {
  return std::max(1, static_cast<int>(std::lround(c.subsample_stride * fps / 30.0)));
}

/// Keeps every stride-th frame and embeds it. Same result as embedding the
/// whole trace and subsampling the rows, without the wasted work.
inline Eigen::MatrixXd trace_to_inputs(const PoseTrace& trace, int stride, double sigma = kDefaultBinSigma) {
  PoseTrace kept;
  kept.fps = trace.fps / stride;
  for (std::size_t k = 0; k < trace.frames.size(); k += static_cast<std::size_t>(stride)) kept.frames.push_back(trace.frames[k]);
  return embed_trace(kept, sigma);
}

inline std::vector<TrainingSample> load_samples(const Manifest& m, const std::vector<std::size_t>& which, const NetConfig& net) {
  std::vector<TrainingSample> out;
  out.reserve(which.size());
  for (auto i : which) {
    const ManifestEntry& e = m.entries[i];
    const PoseTrace trace = read_trace_csv((m.dir / e.trace_path).string());
    out.push_back({e.id, trace_to_inputs(trace, effective_stride(net, trace.fps)), e.clusters});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainOutcome {
  TrainResult result;
  json log;  // config, seed, per-epoch metrics, best checkpoint
};

inline TrainOutcome cmd_train(const Manifest& m, const SplitSpec& split, const NetConfig& net, const TrainConfig& cfg,
                              const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const SplitIndices idx = apply_split(m, split);
  const auto train_set = load_samples(m, idx.train, net);
  const auto holdout = load_samples(m, idx.test, net);
  TrainOutcome out;
  out.result = train(ModelParams::init(net, cfg.seed), train_set, holdout, cfg, on_epoch);

  json epochs = json::array();
  for (const auto& e : out.result.log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"grad_norm", e.grad_norm},
                      {"holdout_accuracy", e.holdout_accuracy},
                      {"holdout_mdtw_mean", e.holdout_mdtw}});
  }
  out.log = {{"split", split.to_json()},
             {"net", to_json(net)},
             {"train", to_json(cfg)},
             {"seed", cfg.seed},
             {"n_train", train_set.size()},
             {"n_holdout", holdout.size()},
             {"epochs", epochs},
             {"best_epoch", out.result.best_epoch},
             {"best_holdout_accuracy", out.result.best_accuracy},
             {"best_holdout_mdtw_mean", out.result.best_mdtw}};
  return out;
}

/// Reference accuracy and M-DTW points, carried in reports for comparison only.
inline json reference_results() {
  return {{"intra", {{"accuracy_percent", 96.78}, {"mdtw", 0.07}}}, {"inter", {{"accuracy_percent", 86.81}, {"mdtw", 0.38}}}};
}

struct EvalOutcome {
  json report;
  std::string per_sample_csv;
  std::vector<ClusterSequence> predictions;
  std::vector<ClusterSequence> targets;
};

/// Scores already-decoded predictions for the test side of a split.
inline EvalOutcome evaluation_report(const Manifest& m, const SplitIndices& idx, const SplitSpec& split,
                                     std::vector<ClusterSequence> preds, const json& extra = json::object()) {
  EvalOutcome out;
  out.per_sample_csv = "id,text,target,predicted,correct,mdtw\n";
  double mdtw_sum = 0;
  for (std::size_t k = 0; k < idx.test.size(); ++k) {
    const ManifestEntry& e = m.entries[idx.test[k]];
    const double d = prediction_mdtw(preds[k], e.clusters);
    mdtw_sum += d;
    auto spaced = [](const ClusterSequence& s) {
      std::string r;
      for (ClusterId c : s) r += (r.empty() ? "" : " ") + std::to_string(c.value());
      return r;
    };
    char num[32];
    std::snprintf(num, sizeof num, "%.6f", d);
    out.per_sample_csv += e.id + ",\"" + e.text + "\"," + spaced(e.clusters) + "," + spaced(preds[k]) + "," +
                          (preds[k] == e.clusters ? "1" : "0") + "," + num + "\n";
    out.targets.push_back(e.clusters);
  }
  out.predictions = std::move(preds);
  const double n = static_cast<double>(idx.test.size());
  out.report = {{"scenario", split.name()},
                {"accuracy", exact_accuracy(out.predictions, out.targets)},
                {"mdtw_mean", mdtw_sum / n},
                {"n", idx.test.size()},
                {"split", split.to_json()},
                {"mdtw_weights", {{"w_euclid", MdtwConfig{}.w_euclid}, {"w_dir", MdtwConfig{}.w_dir}}},
                {"reference_results", reference_results()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) out.report[it.key()] = it.value();
  return out;
}

inline EvalOutcome cmd_eval(const ModelParams& model, const Manifest& m, const SplitSpec& split, int beam_width = 10) {
  const SplitIndices idx = apply_split(m, split);
  const auto samples = load_samples(m, idx.test, model.config);
  auto preds = decode_all(model, samples, beam_width, default_threads());
  return evaluation_report(m, idx, split, std::move(preds),
                           {{"beam_width", beam_width}, {"net", to_json(model.config)}, {"model_version", model_version(model)}});
}

// ---------------------------------------------------------------------------
// Lexicon statistics

inline json cmd_lexicon_stats(const std::vector<std::string>& words) {
  json modes = json::array();
  for (bool collapse : {false, true}) {
    ClusterTrie::BuildReport rep;
    const ClusterTrie trie = ClusterTrie::build(words, KeyboardLayout::standard(), collapse, &rep);
    const LexiconStats s = trie.stats();
    modes.push_back({{"collapse", collapse},
                     {"unique_sequences", s.unique_sequences},
                     {"words", s.words},
                     {"avg_words_per_sequence", s.avg_words_per_sequence},
                     {"skipped_unsupported", rep.skipped_unsupported},
                     {"skipped_duplicates", rep.skipped_duplicates}});
  }
  return {{"input_words", words.size()}, {"modes", modes}};
}

// ---------------------------------------------------------------------------
// Decoding (shared by `headgest decode` and POST /api/decode)

struct HandlerResponse {
  int status = 200;
  json body;
};

class DecodeService {
 public:
  DecodeService(ModelParams model, ClusterTrie lexicon) : model_(std::move(model)), lexicon_(std::move(lexicon)) {}

  static constexpr int kDefaultBeam = 10;
  static constexpr int kDefaultSuggest = 5;

  /// Body: {"fps":30, "angles":[[yaw,pitch,roll],...], "beam":10, "suggest":5}.
  HandlerResponse handle_decode(const json& body) const {
    auto bad = [](const std::string& kind, const std::string& msg) {
      return HandlerResponse{400, {{"error", kind}, {"message", msg}}};
    };
    if (!body.is_object()) return bad("BadRequest", "body must be a JSON object");
    PoseTrace trace;
    int beam = kDefaultBeam, suggest = kDefaultSuggest;
    try {
      trace.fps = body.value("fps", 30.0);
      beam = body.value("beam", kDefaultBeam);
      suggest = body.value("suggest", kDefaultSuggest);
      if (!body.contains("angles") || !body.at("angles").is_array()) return bad("BadRequest", "missing 'angles' array");
      for (const auto& row : body.at("angles")) {
        if (!row.is_array() || row.size() != 3) return bad("BadRequest", "each angle row must be [yaw, pitch, roll]");
        trace.frames.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
      }
    } catch (const json::exception& e) {
      return bad("BadRequest", e.what());
    }
    if (!(trace.fps > 0)) return bad("BadRequest", "fps must be positive");
    if (beam < 1) return bad("BadRequest", "beam must be >= 1");
    if (suggest < 0) return bad("BadRequest", "suggest must be >= 0");
    if (trace.frames.empty()) return bad("EmptyTrace", "trace has no frames");
    try {
      for (const auto& f : trace.frames) {
        check_angle(f.yaw);
        check_angle(f.pitch);
        check_angle(f.roll);
      }
    } catch (const AngleOutOfRange& e) {
      return bad("AngleOutOfRange", e.what());
    }

    const Eigen::MatrixXd inputs = trace_to_inputs(trace, effective_stride(model_.config, trace.fps));
    const Labels labels = beam_decode(infer(model_, inputs), beam);
    json out = {{"clusters", labels}};
    if (suggest > 0) {
      json list = json::array();
      if (!labels.empty()) {
        for (const auto& s : lexicon_.suggest(to_clusters(labels), static_cast<std::size_t>(suggest))) {
          list.push_back({{"word", s.word}, {"rank", s.rank}});
        }
      }
      out["suggestions"] = list;
    }
    return {200, out};
  }

  json health() const { return {{"status", "ok"}, {"model_version", model_version(model_)}}; }

  const ModelParams& model() const noexcept { return model_; }

 private:
  ModelParams model_;
  ClusterTrie lexicon_;
};

/// Converts a trace into the decode request body used by the service.
inline json decode_request(const PoseTrace& trace, int beam, int suggest) {
  json angles = json::array();
  for (const auto& f : trace.frames) angles.push_back({f.yaw, f.pitch, f.roll});
  return {{"fps", trace.fps}, {"angles", angles}, {"beam", beam}, {"suggest", suggest}};
}

}  // namespace headgest
