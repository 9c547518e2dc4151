#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_check.hpp"
#include "hashemb/errors.hpp"
#include "hashemb/model.hpp"
#include "synthetic.hpp"

namespace hashemb {
namespace {

using Words = std::vector<std::string>;

EmbeddingConfig small_config(bool append = false) {
  EmbeddingConfig c;
  c.K = 64;
  c.B = 16;
  c.k = 2;
  c.d = 4;
  c.append_importance = append;
  return c;
}

LinearClassifier small_model(std::size_t classes = 3, std::uint64_t seed = 1) {
  return new_classifier(new_hash_embedding(small_config(), seed), classes, seed);
}

// ---- forward / loss -----------------------------------------------------------------

TEST(Forward, ZeroWeightsGiveUniform) {
  auto m = small_model(4);
  for (auto& w : m.W_mut()) w = 0;
  const auto probs = forward(m, std::span<const std::string>(Words{"a", "b"}));
  for (float p : probs) EXPECT_FLOAT_EQ(p, 0.25f);
}

TEST(Forward, TwoClassClosedForm) {
  // hidden = E[b] for one token with k=1; choose W so logits are (0, ln 3).
  EmbeddingConfig c;
  c.K = 4, c.B = 4, c.k = 1, c.d = 1;
  auto emb = new_hash_embedding(c, 1);
  for (auto& e : emb.E_mut()) e = 1.0f;
  LinearClassifier m(std::move(emb), 2, {0.0f, 0.0f}, {0.0f, static_cast<float>(std::log(3.0))});
  const auto probs = forward(m, std::span<const std::string>(Words{"x"}));
  EXPECT_NEAR(probs[0], 0.25f, 1e-7f);
  EXPECT_NEAR(probs[1], 0.75f, 1e-7f);
}

TEST(Forward, StableForHugeLogitsAndNormalised) {
  auto m = small_model(3);
  for (auto& w : m.W_mut()) w = 0;
  m.bias_mut()[0] = 1e4f;
  m.bias_mut()[1] = -1e4f;
  const auto probs = forward(m, std::span<const std::string>(Words{"a"}));
  EXPECT_FLOAT_EQ(probs[0], 1.0f);
  auto r = small_model(5, 9);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    Words words{"t" + std::to_string(rng.below(100)), "u" + std::to_string(rng.below(100))};
    const auto p = forward(r, std::span<const std::string>(words));
    double s = 0;
    for (float v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(CrossEntropy, Examples) {
  const std::vector<float> uniform{0.5f, 0.5f};
  EXPECT_NEAR(cross_entropy<float>(uniform, 0), 0.693147f, 1e-5f);
  const std::vector<float> certain{0.0f, 1.0f};
  EXPECT_EQ(cross_entropy<float>(certain, 1), 0.0f);
  const std::vector<double> quarter{0.25, 0.75};
  EXPECT_NEAR(cross_entropy<double>(quarter, 0), std::log(4.0), 1e-12);
  EXPECT_NEAR(cross_entropy<double>(std::vector<double>{0.0, 1.0}, 0), -std::log(1e-12), 1e-9);
  EXPECT_THROW(cross_entropy<float>(uniform, 2), InputDomainError);
}

// ---- backward ---------------------------------------------------------------------------

TEST(Backward, OneHotPredictionGivesZeroGradient) {
  auto m = small_model(2);
  for (auto& w : m.W_mut()) w = 0;
  m.bias_mut()[0] = 1e4f;  // exp(-1e4) underflows to exactly 0
  const auto g = backward(m, std::span<const std::string>(Words{"a", "b"}), 0);
  for (float v : g.W) EXPECT_EQ(v, 0.0f);
  for (float v : g.bias) EXPECT_EQ(v, 0.0f);
  for (std::size_t s = 0; s < g.embedding.e_rows.size(); ++s) {
    for (float v : g.embedding.e_rows.row_at(s)) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Backward, FiniteDifferenceRandomInstances) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto inst = testing::random_gradient_instance(seed, seed % 2 == 1);
    const auto r = testing::check_model_backward(inst);
    EXPECT_GT(r.entries, 0u);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(BatchGradient, IsExactMeanOfPerSampleGradients) {
  auto m = small_model(3, 5);
  std::vector<std::vector<EncodedToken>> docs;
  std::vector<std::uint32_t> labels;
  Rng rng(8);
  for (int i = 0; i < 8; ++i) {
    Words w;
    for (int j = 0; j < 5; ++j) w.push_back("w" + std::to_string(rng.below(30)));
    docs.push_back(m.embedding().encode(w));
    labels.push_back(static_cast<std::uint32_t>(rng.below(3)));
  }
  std::vector<std::span<const EncodedToken>> views(docs.begin(), docs.end());
  ModelGradients<float> batch;
  const float loss = batch_gradient<float>(m, views, labels, batch);

  // Independent accumulation in double.
  std::vector<double> W(batch.W.size(), 0.0), bias(3, 0.0);
  std::map<std::uint64_t, std::vector<double>> E;
  double loss_sum = 0;
  Workspace<float> ws;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    ModelGradients<float> g(m);
    loss_sum += backward<float>(m, docs[i], labels[i], g, ws);
    for (std::size_t j = 0; j < W.size(); ++j) W[j] += g.W[j];
    for (std::size_t j = 0; j < 3; ++j) bias[j] += g.bias[j];
    for (std::size_t s = 0; s < g.embedding.e_rows.size(); ++s) {
      auto& row = E[g.embedding.e_rows.key_at(s)];
      row.resize(4, 0.0);
      for (std::size_t j = 0; j < 4; ++j) row[j] += g.embedding.e_rows.row_at(s)[j];
    }
  }
  EXPECT_NEAR(loss, loss_sum / 8, 1e-6);
  for (std::size_t j = 0; j < W.size(); ++j) EXPECT_NEAR(batch.W[j], W[j] / 8, 1e-6);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(batch.bias[j], bias[j] / 8, 1e-6);
  EXPECT_EQ(batch.embedding.e_rows.size(), E.size());
  for (const auto& [key, row] : E) {
    const auto got = batch.embedding.e_rows.find(key);
    ASSERT_EQ(got.size(), 4u);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], row[j] / 8, 1e-6);
  }
}

TEST(BatchGradient, RejectsMismatchedInputs) {
  auto m = small_model();
  std::vector<std::span<const EncodedToken>> views(2);
  std::vector<std::uint32_t> labels(1);
  ModelGradients<float> out;
  EXPECT_THROW(batch_gradient<float>(m, views, labels, out), InputDomainError);
}

// ---- Adam -------------------------------------------------------------------------------

TEST(Adam, FirstStepIsAlphaTimesSign) {
  auto m = small_model(2);
  const std::vector<float> before(m.W().begin(), m.W().end());
  ModelGradients<float> g(m);
  Rng rng(3);
  for (auto& v : g.W) v = static_cast<float>(rng.uniform(-5, 5));
  AdamState adam(m, AdamConfig{});
  adam.apply(m, g);
  for (std::size_t i = 0; i < g.W.size(); ++i) {
    if (std::fabs(g.W[i]) < 1e-3f) continue;
    const double expected = -0.001 * (g.W[i] > 0 ? 1 : -1);
    EXPECT_NEAR(m.W()[i] - before[i], expected, 1e-6) << i;
  }
}

TEST(Adam, StepMagnitudeBound) {
  // |step| <= alpha * (1 - beta1) / sqrt(1 - beta2) for any gradient sequence.
  auto m = small_model(3, 2);
  AdamConfig cfg;
  const double bound = cfg.alpha * (1 - cfg.beta1) / std::sqrt(1 - cfg.beta2);
  AdamState adam(m, cfg);
  Rng rng(12);
  for (int step = 0; step < 200; ++step) {
    ModelGradients<float> g(m);
    for (auto& v : g.W) v = static_cast<float>(rng.uniform(-1, 1) * std::pow(10.0, rng.uniform(-4, 4)));
    for (int r = 0; r < 3; ++r) {
      auto row = g.embedding.e_rows.row(rng.below(16));
      for (auto& v : row) v = static_cast<float>(rng.uniform(-10, 10));
    }
    const std::vector<float> W0(m.W().begin(), m.W().end());
    const std::vector<float> E0(m.embedding().E().begin(), m.embedding().E().end());
    adam.apply(m, g);
    for (std::size_t i = 0; i < W0.size(); ++i) {
      ASSERT_LE(std::fabs(double(m.W()[i]) - W0[i]), bound * 1.001 + 1e-7);
    }
    for (std::size_t i = 0; i < E0.size(); ++i) {
      ASSERT_LE(std::fabs(double(m.embedding().E()[i]) - E0[i]), bound * 1.001 + 1e-7);
    }
  }
}

TEST(Adam, LazyRowsUntouchedKeepValuesAndMoments) {
  auto m = small_model(2);
  AdamState adam(m, AdamConfig{});
  ModelGradients<float> g1(m);
  for (auto& v : g1.embedding.e_rows.row(3)) v = 1.0f;
  for (auto& v : g1.embedding.p_rows.row(7)) v = 1.0f;
  adam.apply(m, g1);

  const std::vector<float> E(m.embedding().E().begin(), m.embedding().E().end());
  const std::vector<float> P(m.embedding().P().begin(), m.embedding().P().end());
  const std::vector<float> mE(adam.m_E().begin(), adam.m_E().end());
  const std::vector<float> vP(adam.v_P().begin(), adam.v_P().end());

  ModelGradients<float> g2(m);
  for (auto& v : g2.embedding.e_rows.row(5)) v = -1.0f;
  adam.apply(m, g2);
  EXPECT_EQ(adam.step(), 2u);
  const std::size_t d = 4;
  for (std::size_t j = 0; j < d; ++j) {
    EXPECT_EQ(m.embedding().E()[3 * d + j], E[3 * d + j]);
    EXPECT_EQ(adam.m_E()[3 * d + j], mE[3 * d + j]);
    EXPECT_NE(m.embedding().E()[5 * d + j], E[5 * d + j]);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(m.embedding().P()[7 * 2 + i], P[7 * 2 + i]);
    EXPECT_EQ(adam.v_P()[7 * 2 + i], vP[7 * 2 + i]);
  }
}

TEST(Adam, RejectsGradientsForFrozenTables) {
  auto m = new_classifier(as_hashing_trick(8, 2, 1), 2, 1);
  AdamState adam(m, AdamConfig{});
  ModelGradients<float> g(m);
  g.embedding.p_rows.row(0)[0] = 1.0f;
  EXPECT_THROW(adam.apply(m, g), InputDomainError);
}

// ---- evaluation / ensembles -------------------------------------------------------------

TEST(Evaluate, UniformModelOnBalancedSetScoresClassZeroFrequency) {
  auto m = small_model(4);
  for (auto& w : m.W_mut()) w = 0;
  Dataset ds;
  ds.num_classes = 4;
  for (int i = 0; i < 40; ++i) ds.samples.push_back({static_cast<std::uint32_t>(i % 4), "x y"});
  EXPECT_EQ(evaluate(m, ds), 0.25);
  EXPECT_EQ(evaluate(m, ds, 3), 0.25);
}

TEST(Evaluate, ClassCountMismatchIsValidationError) {
  auto m = small_model(3);
  Dataset ds;
  ds.num_classes = 4;
  ds.samples.push_back({0, "a"});
  EXPECT_THROW(evaluate(m, ds), ValidationError);
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  auto m = small_model(3, 4);
  testing::SignalCorpusSpec spec;
  spec.num_classes = 3;
  spec.docs = 301;
  spec.noise_vocab = 50;
  const auto ds = make_signal_corpus(spec);
  const auto enc = encode_dataset(m, ds);
  const auto one = evaluate_detailed(m, enc, 1);
  const auto four = evaluate_detailed(m, enc, 4);
  EXPECT_EQ(one.accuracy, four.accuracy);
  EXPECT_EQ(one.confusion, four.confusion);
  EXPECT_NEAR(one.mean_loss, four.mean_loss, 1e-9);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<float> p{0.2f, 0.4f, 0.4f};
  EXPECT_EQ(argmax(p), 1u);
}

TEST(EnsemblePredict, SingleMemberEqualsForward) {
  std::vector<LinearClassifier> models{small_model(3, 7)};
  const Words toks{"a", "b", "c"};
  const auto mean = ensemble_predict(models, toks);
  const auto probs = forward(models[0], std::span<const std::string>(toks));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(mean[c], static_cast<double>(probs[c]));
}

TEST(EnsemblePredict, OppositeCertainMembersAverage) {
  std::vector<LinearClassifier> models{small_model(2, 1), small_model(2, 2)};
  for (auto& m : models) std::fill(m.W_mut().begin(), m.W_mut().end(), 0.0f);
  models[0].bias_mut()[0] = 200.0f;
  models[1].bias_mut()[1] = 200.0f;
  const auto mean = ensemble_predict(models, Words{"q"});
  EXPECT_EQ(mean, (std::vector<double>{0.5, 0.5}));
}

TEST(EnsemblePredict, MismatchedClassesThrow) {
  std::vector<LinearClassifier> models{small_model(2), small_model(3)};
  EXPECT_THROW(ensemble_predict(models, Words{"q"}), InputDomainError);
  EXPECT_THROW(ensemble_predict(std::span<const LinearClassifier>{}, Words{"q"}),
               InputDomainError);
}

// ---- importance ----------------------------------------------------------------------------

LinearClassifier dictionary_model(const Vocabulary& vocab, std::uint64_t seed) {
  EmbeddingConfig c;
  c.K = vocab.size() + 1;
  c.B = 8;
  c.k = 2;
  c.d = 3;
  c.id_mode = IdMode::dictionary;
  return new_classifier(new_hash_embedding(c, seed, vocab.to_dictionary()), 2, seed);
}

TEST(TopImportance, FreshModelFallsBackToIdOrder) {
  const auto vocab = build_vocab(Words{"d c b a", "a b"}, 1, 10);
  auto m = dictionary_model(vocab, 3);
  const auto top = top_importance(m, vocab, 3, ImportanceOrder::largest);
  ASSERT_EQ(top.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(top[i].id, i + 1);
    EXPECT_EQ(top[i].magnitude, 1.0f);
    EXPECT_EQ(top[i].token, vocab.token(i + 1));
  }
}

TEST(TopImportance, RanksByMaxAbsoluteImportance) {
  const auto vocab = build_vocab(Words{"a b c d"}, 1, 10);
  auto m = dictionary_model(vocab, 3);
  auto P = m.embedding().P_mut();
  P[2 * vocab.id("c")] = -4.0f;
  P[2 * vocab.id("b") + 1] = 0.1f;
  P[2 * vocab.id("b")] = 0.2f;
  const auto big = top_importance(m, vocab, 1, ImportanceOrder::largest);
  EXPECT_EQ(big[0].token, "c");
  EXPECT_EQ(big[0].magnitude, 4.0f);
  const auto small = top_importance(m, vocab, 1, ImportanceOrder::smallest);
  EXPECT_EQ(small[0].token, "b");
  EXPECT_EQ(small[0].importance, (std::vector<float>{0.2f, 0.1f}));
}

TEST(TopImportance, HashedModeIsUnsupported) {
  const auto vocab = build_vocab(Words{"a"}, 1, 10);
  EXPECT_THROW(top_importance(small_model(), vocab, 1, ImportanceOrder::largest),
               UnsupportedModeError);
}

// ---- bundle --------------------------------------------------------------------------------

TEST(ModelBundle, RoundTripIsBitExact) {
  auto m = small_model(3, 11);
  m.set_ngram_order(2);
  const std::string bytes = model_bytes(m);
  std::istringstream in(bytes);
  const auto back = load_model(in);
  EXPECT_EQ(model_bytes(back), bytes);
  EXPECT_EQ(back.ngram_order(), 2u);
  EXPECT_TRUE(bitwise_equal(back.embedding(), m.embedding()));
}

TEST(ModelBundle, FileRoundTrip) {
  auto m = small_model(2, 12);
  const auto path = std::filesystem::temp_directory_path() / "hashemb_model_test.bin";
  save_model(path, m);
  const auto back = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(model_bytes(back), model_bytes(m));
}

TEST(ModelBundle, VersionMismatchAndTruncationAreFormatErrors) {
  const std::string bytes = model_bytes(small_model());
  std::string bumped = bytes;
  bumped[4] = 9;
  std::istringstream a(bumped);
  EXPECT_THROW(load_model(a), FormatError);
  std::istringstream b(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(load_model(b), FormatError);
}

}  // namespace
}  // namespace hashemb
