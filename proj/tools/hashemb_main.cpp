// hashemb: train, evaluate and inspect hash-embedding text classifiers.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <optional>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hashemb/embedding.hpp"
#include "hashemb/errors.hpp"
#include "hashemb/hashing.hpp"
#include "hashemb/kernels.hpp"
#include "hashemb/model.hpp"
#include "hashemb/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hashemb;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr HashSeed kDigestSeed{0x68656d62ULL};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return "murmur64:" + hex64(seeded_hash(kDigestSeed, ss.str()));
}

std::string bytes_digest(const std::string& bytes) {
  return "murmur64:" + hex64(seeded_hash(kDigestSeed, bytes));
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---- datasets ---------------------------------------------------------------------

struct DataFiles {
  fs::path train, test;
  std::size_t classes = 0;
};

std::size_t count_class_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") ++n;
  }
  return n;
}

/// `spec` is a directory holding train.csv / test.csv / classes.txt, or the
/// name of one under $HASHEMB_DATA_DIR or ./data.
fs::path resolve_data_dir(const std::string& spec) {
  std::vector<fs::path> candidates{spec};
  if (const char* root = std::getenv("HASHEMB_DATA_DIR")) candidates.push_back(fs::path(root) / spec);
  candidates.push_back(fs::path("data") / spec);
  for (const auto& c : candidates) {
    if (fs::is_directory(c)) return c;
  }
  throw std::runtime_error("dataset directory '" + spec + "' not found");
}

DataFiles data_files(const std::string& data, const std::string& train, const std::string& test,
                     std::size_t classes) {
  DataFiles f;
  if (!data.empty()) {
    const auto dir = resolve_data_dir(data);
    f.train = dir / "train.csv";
    f.test = dir / "test.csv";
    if (fs::exists(dir / "classes.txt")) f.classes = count_class_lines(dir / "classes.txt");
    if (!fs::exists(f.test)) f.test.clear();
  }
  if (!train.empty()) f.train = train;
  if (!test.empty()) f.test = test;
  if (classes != 0) f.classes = classes;
  return f;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  std::string data, train_path, test_path, out = "hashemb_run", manifest;
  std::size_t classes = 0;
  std::string mode = "hashed";
  std::uint64_t K = 1u << 20, B = 1u << 16, k = 2, d = 20;
  std::size_t ngrams = 1;
  std::size_t vocab_size = 1000000;
  bool append_importance = false, separate_importance_hash = false, hash_unknown = false;
  std::uint64_t seed = 0;
  std::size_t patience = 10, batch_size = 256, max_epochs = 100;
  double val_fraction = 0.05, lr = 0.001;
  bool no_snippets = false;
  bool json_out = false, quiet = false;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "dataset directory (train.csv, test.csv, classes.txt)");
  cmd->add_option("--train", a.train_path, "training CSV (overrides --data)");
  cmd->add_option("--test", a.test_path, "test CSV (overrides --data)");
  cmd->add_option("--classes", a.classes, "number of classes (default: classes.txt)");
  cmd->add_option("--mode", a.mode, "hashed | dict | trick | standard")
      ->check(CLI::IsMember({"hashed", "dict", "trick", "standard"}));
  cmd->add_option("--K", a.K, "token id range / importance rows")->check(CLI::PositiveNumber);
  cmd->add_option("--B", a.B, "component vectors")->check(CLI::PositiveNumber);
  cmd->add_option("--k", a.k, "hash functions per token")->check(CLI::Range(1, 64));
  cmd->add_option("--d", a.d, "component vector width")->check(CLI::PositiveNumber);
  cmd->add_option("--ngrams", a.ngrams, "maximum n-gram order")->check(CLI::Range(1, 32));
  cmd->add_option("--vocab-size", a.vocab_size, "dictionary size for dict/standard modes")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--append-importance", a.append_importance,
                "concatenate importance weights to the embedding");
  cmd->add_flag("--separate-importance-hash", a.separate_importance_hash,
                "index importance rows with an independent hash");
  cmd->add_flag("--hash-unknown", a.hash_unknown,
                "dict mode: hash unenrolled tokens instead of using id 0");
  cmd->add_option("--seed", a.seed, "seed for initialization, splits and sampling")
      ->envname("HASHEMB_SEED");
  cmd->add_option("--patience", a.patience)->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", a.batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--max-epochs", a.max_epochs)->check(CLI::PositiveNumber);
  cmd->add_option("--val-fraction", a.val_fraction)->check(CLI::Range(1e-9, 1.0 - 1e-9));
  cmd->add_option("--lr", a.lr, "Adam step size")->check(CLI::PositiveNumber);
  cmd->add_flag("--no-snippets", a.no_snippets, "train on whole documents");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--manifest", a.manifest, "re-run the configuration recorded in a manifest");
  cmd->add_flag("--json", a.json_out, "print a JSON summary record");
  cmd->add_flag("--quiet", a.quiet, "no per-epoch progress");
}

/// Flags that reproduce the configuration, excluding output/presentation.
std::vector<std::string> resolved_args(const TrainArgs& a, const DataFiles& f) {
  std::vector<std::string> v{"--train", fs::absolute(f.train).string()};
  if (!f.test.empty()) v.insert(v.end(), {"--test", fs::absolute(f.test).string()});
  auto add = [&](const char* flag, auto value) {
    v.push_back(flag);
    if constexpr (std::is_same_v<decltype(value), std::string>) {
      v.push_back(value);
    } else {
      std::ostringstream s;
      s.precision(17);
      s << value;
      v.push_back(s.str());
    }
  };
  add("--classes", f.classes);
  add("--mode", a.mode);
  add("--K", a.K);
  add("--B", a.B);
  add("--k", a.k);
  add("--d", a.d);
  add("--ngrams", a.ngrams);
  add("--vocab-size", a.vocab_size);
  add("--seed", a.seed);
  add("--patience", a.patience);
  add("--batch-size", a.batch_size);
  add("--max-epochs", a.max_epochs);
  add("--val-fraction", a.val_fraction);
  add("--lr", a.lr);
  if (a.append_importance) v.push_back("--append-importance");
  if (a.separate_importance_hash) v.push_back("--separate-importance-hash");
  if (a.hash_unknown) v.push_back("--hash-unknown");
  if (a.no_snippets) v.push_back("--no-snippets");
  return v;
}

json config_json(const EmbeddingConfig& c) {
  return {{"K", c.K},
          {"B", c.B},
          {"k", c.k},
          {"d", c.d},
          {"id_mode", c.id_mode == IdMode::dictionary ? "dictionary" : "hashed"},
          {"append_importance", c.append_importance},
          {"separate_importance_hash", c.separate_importance_hash},
          {"hash_unknown", c.hash_unknown},
          {"kind", c.kind == EmbeddingKind::hash            ? "hash"
                   : c.kind == EmbeddingKind::hashing_trick ? "hashing_trick"
                                                            : "standard"},
          {"parameter_count", parameter_count(c)}};
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  const auto files = data_files(a.data, a.train_path, a.test_path, a.classes);
  if (files.train.empty()) throw UsageError("train needs --data or --train");
  if (files.classes == 0) throw UsageError("class count unknown: pass --classes");

  const auto t0 = std::chrono::steady_clock::now();
  const Dataset train_ds = load_dataset(files.train, files.classes);
  std::optional<Dataset> test_ds;
  if (!files.test.empty()) test_ds = load_dataset(files.test, files.classes);

  std::optional<Vocabulary> vocab;
  auto make_model = [&]() -> LinearClassifier {
    EmbeddingConfig c;
    c.K = a.K;
    c.B = a.B;
    c.k = a.k;
    c.d = a.d;
    c.append_importance = a.append_importance;
    c.separate_importance_hash = a.separate_importance_hash;
    if (a.mode == "hashed") {
      return new_classifier(new_hash_embedding(c, a.seed), files.classes, a.seed);
    }
    if (a.mode == "trick") {
      return new_classifier(as_hashing_trick(a.B, a.d, a.seed), files.classes, a.seed);
    }
    vocab = build_vocab(train_ds, a.ngrams, a.vocab_size);
    if (a.mode == "standard") {
      return new_classifier(as_standard_embedding(vocab->tokens(), a.d, a.seed), files.classes,
                            a.seed);
    }
    c.id_mode = IdMode::dictionary;
    c.hash_unknown = a.hash_unknown;
    c.K = vocab->size() + 1;
    return new_classifier(new_hash_embedding(c, a.seed, vocab->to_dictionary()), files.classes,
                          a.seed);
  };
  LinearClassifier model = make_model();
  model.set_ngram_order(a.ngrams);

  TrainConfig cfg;
  cfg.patience = a.patience;
  cfg.val_fraction = a.val_fraction;
  cfg.batch_size = a.batch_size;
  cfg.max_epochs = a.max_epochs;
  cfg.seed = a.seed;
  cfg.snippets = !a.no_snippets;
  cfg.adam.alpha = a.lr;

  fs::create_directories(a.out);
  std::ofstream history_out(fs::path(a.out) / "history.jsonl");
  if (!history_out) throw std::runtime_error("cannot write to " + a.out);
  const auto hist = train(model, train_ds, cfg, [&](const EpochRecord& r) {
    history_out << json{{"epoch", r.epoch},
                        {"train_loss", r.train_loss},
                        {"val_loss", r.val_loss},
                        {"val_accuracy", r.val_accuracy}}
                       .dump()
                << '\n';
    history_out.flush();
    if (!a.quiet) {
      std::cerr << "epoch " << r.epoch << "  train_loss " << fmt4(r.train_loss) << "  val_loss "
                << fmt4(r.val_loss) << "  val_acc " << fmt4(r.val_accuracy) << '\n';
    }
  });

  const fs::path model_path = fs::path(a.out) / "model.bin";
  save_model(model_path, model);
  if (vocab) vocab->save(fs::path(a.out) / "vocab.tsv");

  json metrics{{"epochs", hist.epochs.size()},
               {"best_epoch", hist.best_epoch},
               {"early_stopped", hist.early_stopped},
               {"best_val_loss", hist.epochs.at(hist.best_epoch - 1).val_loss},
               {"best_val_accuracy", hist.epochs.at(hist.best_epoch - 1).val_accuracy}};
  std::optional<double> test_acc;
  if (test_ds) {
    test_acc = evaluate(model, *test_ds);
    metrics["test_accuracy"] = *test_acc;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json seeds = json::array();
  for (auto s : model.embedding().seeds()) seeds.push_back(s.value);
  json datasets{{"train", {{"path", fs::absolute(files.train).string()},
                           {"digest", file_digest(files.train)},
                           {"samples", train_ds.samples.size()}}}};
  if (test_ds) {
    datasets["test"] = {{"path", fs::absolute(files.test).string()},
                        {"digest", file_digest(files.test)},
                        {"samples", test_ds->samples.size()}};
  }
  const std::string digest = bytes_digest(model_bytes(model));
  json manifest{{"command", "train"},
                {"argv", argv},
                {"resolved_args", resolved_args(a, files)},
                {"mode", a.mode},
                {"embedding", config_json(model.embedding().config())},
                {"classes", files.classes},
                {"ngram_order", a.ngrams},
                {"train",
                 {{"seed", cfg.seed},
                  {"patience", cfg.patience},
                  {"val_fraction", cfg.val_fraction},
                  {"batch_size", cfg.batch_size},
                  {"max_epochs", cfg.max_epochs},
                  {"snippets", cfg.snippets},
                  {"adam",
                   {{"alpha", cfg.adam.alpha},
                    {"beta1", cfg.adam.beta1},
                    {"beta2", cfg.adam.beta2},
                    {"epsilon", cfg.adam.epsilon}}}}},
                {"seeds", seeds},
                {"simd", std::string(simd::name(simd::active_level()))},
                {"datasets", datasets},
                {"duration_seconds", seconds},
                {"metrics", metrics},
                {"model", {{"path", fs::absolute(model_path).string()}, {"digest", digest}}}};
  std::ofstream(fs::path(a.out) / "manifest.json") << manifest.dump(2) << '\n';

  std::cout << "model=" << model_path.string() << '\n'
            << "model_digest=" << digest << '\n'
            << "epochs=" << hist.epochs.size() << '\n'
            << "best_epoch=" << hist.best_epoch << '\n';
  if (test_acc) std::cout << "test_accuracy=" << fmt4(*test_acc) << '\n';
  if (a.json_out) std::cout << json{{"command", "train"}, {"metrics", metrics}, {"model_digest", digest}}.dump() << '\n';
  return 0;
}

// ---- evaluate ---------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> models;
  std::string data, test_path;
  std::size_t classes = 0;
  std::size_t threads = 1;
  bool json_out = false;
};

int cmd_evaluate(const EvalArgs& a) {
  std::vector<LinearClassifier> models;
  for (const auto& p : a.models) models.push_back(load_model(fs::path(p)));
  const std::size_t C = models.front().num_classes();
  const auto files = data_files(a.data, "", a.test_path, a.classes);
  if (files.test.empty()) throw UsageError("evaluate needs --data or --test");
  const std::size_t classes = files.classes ? files.classes : C;
  for (const auto& m : models) {
    if (m.num_classes() != classes) {
      throw ValidationError("model has " + std::to_string(m.num_classes()) +
                            " classes but the dataset has " + std::to_string(classes));
    }
  }
  const Dataset ds = load_dataset(files.test, classes);

  EvaluationResult r;
  if (models.size() == 1) {
    r = evaluate_detailed(models[0], encode_dataset(models[0], ds), a.threads);
  } else {
    r = evaluate_ensemble(models, ds);
  }
  std::cout << "samples=" << ds.samples.size() << '\n'
            << "members=" << models.size() << '\n'
            << "accuracy=" << fmt4(r.accuracy) << '\n'
            << "mean_loss=" << fmt4(r.mean_loss) << '\n'
            << "confusion (rows = true class, columns = predicted)\n";
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t p = 0; p < C; ++p) std::cout << (p ? "\t" : "") << r.confusion[t * C + p];
    std::cout << '\n';
  }
  if (a.json_out) {
    std::cout << json{{"command", "evaluate"},
                      {"accuracy", r.accuracy},
                      {"mean_loss", r.mean_loss},
                      {"members", models.size()},
                      {"confusion", r.confusion}}
                     .dump()
              << '\n';
  }
  return 0;
}

// ---- inspect ----------------------------------------------------------------------

struct InspectArgs {
  std::string model, vocab;
  std::size_t n = 10;
  bool json_out = false;
};

int cmd_inspect(const InspectArgs& a) {
  const auto model = load_model(fs::path(a.model));
  const auto vocab = Vocabulary::load(fs::path(a.vocab));
  const auto top = top_importance(model, vocab, a.n, ImportanceOrder::largest);
  const auto bottom = top_importance(model, vocab, a.n, ImportanceOrder::smallest);
  auto print = [](const char* title, const std::vector<ImportanceEntry>& rows) {
    std::cout << title << '\n';
    for (const auto& e : rows) {
      std::cout << e.token << '\t' << fmt4(e.magnitude);
      for (float p : e.importance) std::cout << '\t' << fmt4(p);
      std::cout << '\n';
    }
  };
  print("# highest importance (token, max |p|, p_1..p_k)", top);
  print("# lowest importance (token, max |p|, p_1..p_k)", bottom);
  if (a.json_out) {
    auto rows = [](const std::vector<ImportanceEntry>& v) {
      json out = json::array();
      for (const auto& e : v) {
        out.push_back({{"token", e.token}, {"magnitude", e.magnitude}, {"importance", e.importance}});
      }
      return out;
    };
    std::cout << json{{"command", "inspect"}, {"top", rows(top)}, {"bottom", rows(bottom)}}.dump()
              << '\n';
  }
  return 0;
}

// ---- collision-stats --------------------------------------------------------------

struct CollisionArgs {
  std::uint64_t K = 0, B = 0, k = 0;
  double vocab = 0;
  bool simulate = false;
  std::uint64_t trials = 1000, seed = 0;
  bool json_out = false;
};

int cmd_collision_stats(const CollisionArgs& a) {
  if (!(a.vocab >= 1)) throw UsageError("--vocab must be >= 1");
  if (a.K == 0 && a.B == 0) throw UsageError("pass --K and/or --B with --k");
  if (a.B != 0 && a.k == 0) throw UsageError("--B needs --k");
  if (a.simulate && a.K == 0) throw UsageError("--simulate needs --K");
  json rec{{"command", "collision-stats"}, {"vocab", a.vocab}};
  std::cout << "vocab=" << fmt_g(a.vocab) << '\n';
  if (a.K != 0) {
    const auto n = static_cast<std::uint64_t>(a.vocab);
    const auto r = make_collision_report(a.K, n);
    std::cout << "K=" << a.K << '\n'
              << "p_col_exact=" << fmt_g(r.p_col_exact) << '\n'
              << "p_col_approx=" << fmt_g(r.p_col_approx) << '\n'
              << "expected_tokens_in_collision=" << fmt_g(r.expected_tokens_in_collision) << '\n';
    rec["K"] = a.K;
    rec["p_col_exact"] = r.p_col_exact;
    rec["p_col_approx"] = r.p_col_approx;
    rec["expected_tokens_in_collision"] = r.expected_tokens_in_collision;
    if (a.simulate) {
      const auto mc = simulate_collisions(a.K, n, a.trials, a.seed);
      std::cout << "mc_trials=" << a.trials << '\n'
                << "mc_mean=" << fmt_g(mc.mean) << '\n'
                << "mc_standard_error=" << fmt_g(mc.standard_error) << '\n';
      rec["monte_carlo"] = {{"trials", a.trials}, {"mean", mc.mean}, {"standard_error", mc.standard_error}};
    }
  }
  if (a.B != 0) {
    const double p = combined_collision_probability(a.B, a.k, a.vocab);
    std::cout << "B=" << a.B << '\n' << "k=" << a.k << '\n' << "p_col_combined=" << fmt_g(p) << '\n';
    rec["B"] = a.B;
    rec["k"] = a.k;
    rec["p_col_combined"] = p;
  }
  if (a.json_out) std::cout << rec.dump() << '\n';
  return 0;
}

// ---- params -----------------------------------------------------------------------

struct ParamsArgs {
  std::uint64_t K = 10000000, B = 1000000, k = 2, d = 20;
  std::uint64_t K_grow = 0;
  bool json_out = false;
};

int cmd_params(const ParamsArgs& a) {
  EmbeddingConfig c;
  c.K = a.K;
  c.B = a.B;
  c.k = a.k;
  c.d = a.d;
  c.validate();
  const std::uint64_t hash = parameter_count(c);
  const std::uint64_t standard = a.K * a.d;
  const double ratio = static_cast<double>(standard) / static_cast<double>(hash);
  std::cout << "hash_embedding_params=" << hash << "   (B*d + K*k)\n"
            << "standard_embedding_params=" << standard << "   (K*d)\n"
            << "ratio=" << fmt_g(ratio) << '\n';
  json rec{{"command", "params"}, {"hash", hash}, {"standard", standard}, {"ratio", ratio}};
  if (a.K_grow != 0) {
    if (a.K_grow < a.K) throw UsageError("--K-grow must be >= --K");
    const std::uint64_t dK = a.K_grow - a.K;
    std::cout << "# growing K " << a.K << " -> " << a.K_grow << '\n'
              << "model\tbefore\tafter\tdelta\n"
              << "hash\t" << hash << '\t' << hash + dK * a.k << '\t' << dK * a.k << '\n'
              << "standard\t" << standard << '\t' << standard + dK * a.d << '\t' << dK * a.d << '\n';
    rec["grow"] = {{"K_from", a.K}, {"K_to", a.K_grow}, {"hash_delta", dK * a.k}, {"standard_delta", dK * a.d}};
  }
  if (a.json_out) std::cout << rec.dump() << '\n';
  return 0;
}

/// Expands `train --manifest FILE` into the recorded flags, keeping the other
/// flags given on the command line (they come last and win).
std::vector<std::string> expand_manifest(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), "--manifest");
  if (it == args.end() || it + 1 == args.end() || args.size() < 2 || args[1] != "train") return args;
  const std::string path = *(it + 1);
  args.erase(it, it + 2);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path);
  const auto m = json::parse(in);
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  for (const auto& v : m.at("resolved_args")) out.push_back(v.get<std::string>());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    std::vector<std::string> raw(argv, argv + argc);
    raw = expand_manifest(raw);

    CLI::App app{"Hash-embedding text classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "hashemb 1.0");
    app.allow_config_extras(false);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a classifier");
    add_train_options(train_cmd, ta);
    // Later repeats of a flag override earlier ones (manifest re-runs).
    train_cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    for (auto* opt : train_cmd->get_options()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("evaluate", "test accuracy of a model or soft-voting ensemble");
    eval_cmd->add_option("--model", ea.models, "model bundle; repeat for an ensemble")->required();
    eval_cmd->add_option("--data", ea.data, "dataset directory");
    eval_cmd->add_option("--test", ea.test_path, "test CSV");
    eval_cmd->add_option("--classes", ea.classes, "class count of the test file");
    eval_cmd->add_option("--threads", ea.threads, "evaluation threads")->check(CLI::Range(1, 256));
    eval_cmd->add_flag("--json", ea.json_out);

    InspectArgs ia;
    auto* inspect_cmd = app.add_subcommand("inspect", "tokens with the highest and lowest importance");
    inspect_cmd->add_option("--model", ia.model)->required();
    inspect_cmd->add_option("--vocab", ia.vocab)->required();
    inspect_cmd->add_option("--n", ia.n)->check(CLI::PositiveNumber);
    inspect_cmd->add_flag("--json", ia.json_out);

    CollisionArgs ca;
    auto* coll_cmd = app.add_subcommand("collision-stats", "collision probabilities");
    coll_cmd->add_option("--K", ca.K, "slots of a single hash");
    coll_cmd->add_option("--B", ca.B, "buckets per hash function");
    coll_cmd->add_option("--k", ca.k, "hash functions");
    coll_cmd->add_option("--vocab", ca.vocab, "number of distinct tokens")->required();
    coll_cmd->add_flag("--simulate", ca.simulate, "add a Monte Carlo estimate");
    coll_cmd->add_option("--trials", ca.trials)->check(CLI::Range(2ULL, 100000000ULL));
    coll_cmd->add_option("--seed", ca.seed)->envname("HASHEMB_SEED");
    coll_cmd->add_flag("--json", ca.json_out);

    ParamsArgs pa;
    auto* params_cmd = app.add_subcommand("params", "parameter counts");
    params_cmd->add_option("--K", pa.K)->check(CLI::PositiveNumber);
    params_cmd->add_option("--B", pa.B)->check(CLI::PositiveNumber);
    params_cmd->add_option("--k", pa.k)->check(CLI::Range(1, 64));
    params_cmd->add_option("--d", pa.d)->check(CLI::PositiveNumber);
    params_cmd->add_option("--K-grow", pa.K_grow, "show the cost of growing K to this value");
    params_cmd->add_flag("--json", pa.json_out);

    std::vector<std::string> rev(raw.rbegin(), raw.rend() - 1);
    try {
      app.parse(rev);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (*train_cmd) {
      std::vector<std::string> args(raw.begin() + 1, raw.end());
      return cmd_train(ta, args);
    }
    if (*eval_cmd) return cmd_evaluate(ea);
    if (*inspect_cmd) return cmd_inspect(ia);
    if (*coll_cmd) return cmd_collision_stats(ca);
    if (*params_cmd) return cmd_params(pa);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const InputDomainError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
