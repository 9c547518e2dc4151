// Drives the hashemb executable as a subprocess.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("hashemb_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args, const std::string& env = "") {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = env + " " + HASHEMB_CLI_PATH + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

/// key=value lines of a command's output.
std::map<std::string, std::string> kv(const std::string& text) {
  std::map<std::string, std::string> m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line[0] != '#') m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

/// Two-class corpus: class 1 documents contain "good", class 2 "bad".
fs::path write_corpus(const std::string& name, int docs, int seed) {
  const auto dir = scratch() / name;
  fs::create_directories(dir);
  auto write = [&](const fs::path& p, int n, int offset) {
    std::ofstream out(p);
    unsigned state = static_cast<unsigned>(seed + offset);
    for (int i = 0; i < n; ++i) {
      const int label = i % 2 + 1;
      std::string text = label == 1 ? "good" : "bad";
      for (int j = 0; j < 6; ++j) {
        state = state * 1103515245u + 12345u;
        text += " filler" + std::to_string((state >> 16) % 40);
      }
      out << '"' << label << "\",\"title " << i << "\",\"" << text << "\"\n";
    }
  };
  write(dir / "train.csv", docs, 0);
  write(dir / "test.csv", docs / 4, 1000);
  std::ofstream(dir / "classes.txt") << "Positive\nNegative\n";
  return dir;
}

const fs::path& corpus() {
  static const fs::path dir = write_corpus("corpus", 400, 1);
  return dir;
}

std::string train_args(const std::string& out, const std::string& extra = "") {
  return "train --data " + corpus().string() + " --K 4096 --B 256 --k 2 --d 8 --ngrams 2 " +
         "--batch-size 16 --max-epochs 4 --patience 2 --quiet --out " + (scratch() / out).string() +
         " " + extra;
}

// ---- usage errors --------------------------------------------------------------

TEST(CliUsage, MissingSubcommandIsUsageError) { EXPECT_EQ(run("").code, 2); }

TEST(CliUsage, UnknownFlagIsUsageError) { EXPECT_EQ(run("params --bogus 1").code, 2); }

TEST(CliUsage, BadModeIsUsageError) {
  EXPECT_EQ(run("train --data x --mode nonsense").code, 2);
}

TEST(CliUsage, NonPositiveSizesAreUsageErrors) {
  EXPECT_EQ(run("params --K 0").code, 2);
  EXPECT_EQ(run("collision-stats --vocab 10").code, 2);
}

TEST(CliUsage, HelpSucceeds) { EXPECT_EQ(run("--help").code, 0); }

// ---- collision-stats / params -------------------------------------------------------

TEST(CliCollisionStats, SingleHashNearCertain) {
  const auto r = run("collision-stats --K 1000000 --vocab 100000000");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(kv(r.out).at("p_col_exact")), 1.0, 1e-12);
}

TEST(CliCollisionStats, TwoHashesAroundOneInTenThousand) {
  const auto r = run("collision-stats --B 1000000 --k 2 --vocab 100000000 --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(kv(r.out).at("p_col_combined")), 1e-4, 1e-8);
  EXPECT_NE(r.out.find("{\"command\":\"collision-stats\""), std::string::npos);
}

TEST(CliCollisionStats, MonteCarloMatchesClosedForm) {
  const auto r = run("collision-stats --K 2 --vocab 2 --simulate --trials 10000 --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = kv(r.out);
  const double mean = std::stod(m.at("mc_mean"));
  const double se = std::stod(m.at("mc_standard_error"));
  EXPECT_LE(std::abs(mean - 1.0), 3 * se);
}

TEST(CliParams, PaperConfiguration) {
  const auto r = run("params --K 10000000 --B 1000000 --k 2 --d 20");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = kv(r.out);
  EXPECT_EQ(m.at("hash_embedding_params").substr(0, 8), "40000000");
  EXPECT_EQ(m.at("standard_embedding_params").substr(0, 9), "200000000");
  EXPECT_EQ(m.at("ratio"), "5");
}

TEST(CliParams, KEqualsBAndKEqualsD) {
  // B*d + K*k = 2*K*d here, so the hash embedding has twice the parameters.
  const auto r = run("params --K 500 --B 500 --k 7 --d 7");
  ASSERT_EQ(r.code, 0);
  const auto m = kv(r.out);
  EXPECT_EQ(m.at("hash_embedding_params").substr(0, 4), "7000");
  EXPECT_EQ(m.at("standard_embedding_params").substr(0, 4), "3500");
  EXPECT_EQ(m.at("ratio"), "0.5");
}

TEST(CliParams, GrowthTable) {
  const auto r = run("params --K 10000000 --B 1000000 --k 2 --d 10 --K-grow 100000000 --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hash\t30000000\t210000000\t180000000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\"standard_delta\":900000000"), std::string::npos) << r.out;
}

// ---- train / evaluate / inspect --------------------------------------------------------

TEST(CliTrain, WritesArtifactsAndEvaluateAgrees) {
  const auto r = run(train_args("hashed", "--seed 7"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dir = scratch() / "hashed";
  EXPECT_TRUE(fs::exists(dir / "model.bin"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "history.jsonl"));
  const auto train_acc = kv(r.out).at("test_accuracy");

  const auto e = run("evaluate --model " + (dir / "model.bin").string() + " --data " +
                     corpus().string() + " --threads 2");
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(kv(e.out).at("accuracy"), train_acc);
  EXPECT_NE(e.out.find("confusion"), std::string::npos);
}

TEST(CliTrain, SameSeedSameDigestAndEnvSeedDefault) {
  const auto a = run(train_args("seed_a", "--seed 11"));
  const auto b = run(train_args("seed_b", "--seed 11"));
  const auto c = run(train_args("seed_env"), "HASHEMB_SEED=11");
  const auto d = run(train_args("seed_other", "--seed 12"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(scratch() / "seed_a" / "model.bin"), slurp(scratch() / "seed_b" / "model.bin"));
  EXPECT_EQ(kv(a.out).at("model_digest"), kv(c.out).at("model_digest"));
  EXPECT_NE(kv(a.out).at("model_digest"), kv(d.out).at("model_digest"));
}

TEST(CliTrain, ManifestRerunReproducesDigest) {
  const auto a = run(train_args("manifest_src", "--seed 5 --append-importance"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run("train --manifest " + (scratch() / "manifest_src" / "manifest.json").string() +
                     " --quiet --out " + (scratch() / "manifest_rerun").string());
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(kv(a.out).at("model_digest"), kv(b.out).at("model_digest"));
  const std::string manifest = slurp(scratch() / "manifest_src" / "manifest.json");
  for (const char* key : {"\"seeds\"", "\"digest\"", "\"duration_seconds\"", "\"metrics\"",
                          "\"resolved_args\"", "\"embedding\""}) {
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
  }
}

TEST(CliTrain, TrickAndStandardModes) {
  EXPECT_EQ(run(train_args("trick", "--mode trick")).code, 0);
  const auto s = run(train_args("standard", "--mode standard --vocab-size 100"));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_TRUE(fs::exists(scratch() / "standard" / "vocab.tsv"));
}

TEST(CliTrain, MissingDatasetIsRuntimeError) {
  EXPECT_EQ(run("train --data /nonexistent/data --quiet --out " + (scratch() / "x").string()).code, 1);
}

TEST(CliInspect, DictionaryModeListsTopAndBottom) {
  ASSERT_EQ(run(train_args("dict", "--mode dict --vocab-size 1000")).code, 0);
  const auto dir = scratch() / "dict";
  const auto r = run("inspect --model " + (dir / "model.bin").string() + " --vocab " +
                     (dir / "vocab.tsv").string() + " --n 5");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  int rows = 0, headers = 0;
  while (std::getline(in, line)) (line.rfind("#", 0) == 0 ? headers : rows)++;
  EXPECT_EQ(headers, 2);
  EXPECT_EQ(rows, 10);
}

TEST(CliInspect, HashedModelIsUnsupported) {
  ASSERT_EQ(run(train_args("hashed_inspect", "--seed 1")).code, 0);
  ASSERT_EQ(run(train_args("dict_for_vocab", "--mode dict --vocab-size 50")).code, 0);
  const auto r = run("inspect --model " + (scratch() / "hashed_inspect" / "model.bin").string() +
                     " --vocab " + (scratch() / "dict_for_vocab" / "vocab.tsv").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dictionary"), std::string::npos) << r.err;
}

TEST(CliEvaluate, EnsembleOfTwo) {
  ASSERT_EQ(run(train_args("ens_a", "--seed 1")).code, 0);
  ASSERT_EQ(run(train_args("ens_b", "--seed 2 --B 128")).code, 0);
  const auto r = run("evaluate --model " + (scratch() / "ens_a" / "model.bin").string() +
                     " --model " + (scratch() / "ens_b" / "model.bin").string() + " --data " +
                     corpus().string() + " --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(kv(r.out).at("members"), "2");
}

TEST(CliEvaluate, ClassMismatchAndBadVersion) {
  ASSERT_EQ(run(train_args("mismatch", "--seed 3")).code, 0);
  const auto model = scratch() / "mismatch" / "model.bin";
  const auto r = run("evaluate --model " + model.string() + " --data " + corpus().string() +
                     " --classes 3");
  EXPECT_EQ(r.code, 1);

  std::string bytes = slurp(model);
  bytes[4] = 7;
  const auto bad = scratch() / "bad_version.bin";
  std::ofstream(bad, std::ios::binary) << bytes;
  const auto v = run("evaluate --model " + bad.string() + " --data " + corpus().string());
  EXPECT_EQ(v.code, 1);
  EXPECT_NE(v.err.find("version 7"), std::string::npos) << v.err;
  EXPECT_NE(v.err.find("expected 1"), std::string::npos) << v.err;
}

class ScratchCleanup : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(scratch()); }
};

const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

}  // namespace
