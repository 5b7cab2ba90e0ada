// headgest: generate synthetic gesture data, train and evaluate the decoder,
// decode traces and serve the decode API.
//
// Exit codes: 0 success, 1 internal failure, 2 usage or input error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "headgest/http.hpp"
#include "headgest/pipeline.hpp"

namespace {

using namespace headgest;

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config, out, manifest, split = "intra", model, net_config, train_config, log, report, csv;
  std::string trace, words = default_word_list_path(), host = "0.0.0.0", static_dir;
  int epochs = 0, beam = DecodeService::kDefaultBeam, suggest = DecodeService::kDefaultSuggest, port = 8080;
  int profiles = 0, iterations = 0;
  std::string corpus;
  long long seed = -1;
  double test_fraction = 0.2;
  bool quiet = false;
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

int run_gen(const Options& o) {
  json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
  if (o.seed >= 0) cfg["seed"] = o.seed;
  if (o.profiles > 0) cfg["profiles"] = o.profiles;
  if (o.iterations > 0) cfg["iterations"] = o.iterations;
  if (!o.corpus.empty()) cfg["corpus"] = o.corpus;
  const GenConfig gen = GenConfig::from_json(cfg);
  const Manifest m = cmd_gen(gen, o.out);
  std::cout << json{{"samples", m.entries.size()},
                    {"manifest", (fs::path(o.out) / "manifest.json").string()},
                    {"profiles", gen.profiles.size()},
                    {"iterations", gen.iterations},
                    {"seed", gen.seed}}
                   .dump()
            << "\n";
  return 0;
}

SplitSpec split_from(const Options& o) {
  SplitSpec s = SplitSpec::parse(o.split);
  s.test_fraction = o.test_fraction;
  return s;
}

int run_train(const Options& o) {
  const NetConfig net = o.net_config.empty() ? NetConfig::desk() : net_config_from_json(read_json_file(o.net_config));
  json tj = o.train_config.empty() ? json::object() : read_json_file(o.train_config);
  if (o.epochs > 0) tj["epochs"] = o.epochs;
  if (o.seed >= 0) tj["seed"] = o.seed;
  const TrainConfig cfg = train_config_from_json(tj);
  const Manifest m = load_manifest(o.manifest);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutcome out = cmd_train(m, split_from(o), net, cfg, [&](const EpochLog& e) {
    if (o.quiet) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "epoch %3d  loss %8.4f  |g| %7.3f  holdout acc %.4f  mdtw %.4f  (%.1fs)\n", e.epoch, e.train_loss,
                 e.grad_norm, e.holdout_accuracy, e.holdout_mdtw, secs);
  });
  save_model(o.out, out.result.best);
  if (!o.log.empty()) write_text_file(o.log, out.log.dump(2) + "\n");
  std::cout << json{{"model", o.out},
                    {"best_epoch", out.result.best_epoch},
                    {"best_holdout_accuracy", out.result.best_accuracy},
                    {"best_holdout_mdtw_mean", out.result.best_mdtw}}
                   .dump()
            << "\n";
  return 0;
}

int run_eval(const Options& o) {
  const ModelParams model = load_model(o.model);
  const Manifest m = load_manifest(o.manifest);
  const EvalOutcome r = cmd_eval(model, m, split_from(o), o.beam);
  if (!o.csv.empty()) write_text_file(o.csv, r.per_sample_csv);
  write_or_print(o.report, r.report.dump(2) + "\n");
  return 0;
}

int run_decode(const Options& o) {
  std::string text;
  if (o.trace == "-") {
    text.assign(std::istreambuf_iterator<char>(std::cin), {});
  } else {
    std::ifstream is(o.trace, std::ios::binary);
    if (!is) throw ParseError("cannot open trace " + o.trace);
    text.assign(std::istreambuf_iterator<char>(is), {});
  }
  const PoseTrace trace = parse_trace_csv(text);
  DecodeService service(load_model(o.model), ClusterTrie::build(read_word_list(o.words)));
  const HandlerResponse r = service.handle_decode(decode_request(trace, o.beam, o.suggest));
  if (r.status != 200) {
    std::cerr << r.body.dump() << "\n";
    return kExitUsage;
  }
  std::cout << r.body.dump() << "\n";
  return 0;
}

int run_serve(const Options& o) {
  const DecodeService service(load_model(o.model), ClusterTrie::build(read_word_list(o.words)));
  httplib::Server server;
  mount_routes(server, service, o.static_dir);
  if (!server.bind_to_port(o.host, o.port)) {
    std::cerr << "headgest serve: cannot bind " << o.host << ":" << o.port << "\n";
    return kExitUsage;
  }
  std::cerr << "headgest serve: listening on " << o.host << ":" << o.port << " (" << model_version(service.model())
            << ")\n";
  return server.listen_after_bind() ? 0 : kExitInternal;
}

int run_lexicon_stats(const Options& o) {
  json out = cmd_lexicon_stats(read_word_list(o.words));
  out["words_file"] = o.words;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Touchless typing gesture decoder"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic gesture dataset");
  gen->add_option("--config", o.config, "Generation config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Override the config seed");
  gen->add_option("--profiles", o.profiles, "Number of random user profiles");
  gen->add_option("--iterations", o.iterations, "Repetitions per text and profile");
  gen->add_option("--corpus", o.corpus, "study | study-words");

  auto* train = app.add_subcommand("train", "Train the decoder on one side of a split");
  train->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--split", o.split, "intra | inter")->check(CLI::IsMember({"intra", "inter"}));
  train->add_option("--test-fraction", o.test_fraction, "Share of profiles held out (inter)");
  train->add_option("--net", o.net_config, "Network config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--config", o.train_config, "Training config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--epochs", o.epochs, "Override epochs");
  train->add_option("--seed", o.seed, "Override training seed");
  train->add_option("--out", o.out, "Model file to write")->required();
  train->add_option("--log", o.log, "Training log (JSON)");
  train->add_flag("--quiet", o.quiet, "No per-epoch progress");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on the test side of a split");
  eval->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", o.split, "intra | inter")->check(CLI::IsMember({"intra", "inter"}));
  eval->add_option("--test-fraction", o.test_fraction, "Share of profiles held out (inter)");
  eval->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
  eval->add_option("--out", o.report, "Report path (JSON); stdout if omitted");
  eval->add_option("--csv", o.csv, "Per-sample results (CSV)");

  auto* decode = app.add_subcommand("decode", "Decode one trace (CSV file, or - for stdin)");
  decode->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  decode->add_option("--trace", o.trace, "Trace CSV, or - for stdin")->required();
  decode->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
  decode->add_option("--suggest", o.suggest, "Number of word suggestions (0 = none)")->check(CLI::NonNegativeNumber);
  decode->add_option("--words", o.words, "Word list for suggestions")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Serve the decode API over HTTP");
  serve->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  serve->add_option("--words", o.words, "Word list for suggestions")->check(CLI::ExistingFile);
  serve->add_option("--host", o.host);
  serve->add_option("--port", o.port)->check(CLI::Range(1, 65535));
  serve->add_option("--static", o.static_dir, "Directory served at /")->check(CLI::ExistingDirectory);

  auto* stats = app.add_subcommand("lexicon-stats", "Cluster-sequence statistics of a word list");
  stats->add_option("--words", o.words, "Word list, one word per line")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return run_gen(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*decode) return run_decode(o);
    if (*serve) return run_serve(o);
    if (*stats) return run_lexicon_stats(o);
  } catch (const InvalidConfig& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SplitError& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ModelFormatError& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const AngleOutOfRange& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedCharacter& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InfeasibleTarget& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EmptyLexicon& e) {
    std::cerr << "headgest: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "headgest: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
