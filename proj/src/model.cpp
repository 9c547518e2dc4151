#include "hashemb/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "hashemb/errors.hpp"
#include "hashemb/kernels.hpp"
#include "hashemb/random.hpp"

namespace hashemb {

// ---- classifier --------------------------------------------------------------

template <typename Real>
BasicLinearClassifier<Real>::BasicLinearClassifier(BasicHashEmbedding<Real> embedding,
                                                   std::size_t num_classes,
                                                   std::vector<Real> W, std::vector<Real> bias)
    : embedding_(std::move(embedding)),
      num_classes_(num_classes),
      W_(std::move(W)),
      bias_(std::move(bias)) {
  if (num_classes_ == 0) throw InputDomainError("classifier needs at least one class");
  if (W_.size() != num_classes_ * input_dim() || bias_.size() != num_classes_) {
    throw InputDomainError("classifier weights do not match num_classes x input_dim");
  }
}

template <typename Real>
std::vector<EncodedToken> BasicLinearClassifier<Real>::encode_text(std::string_view text) const {
  const auto tokens = text_to_tokens(text, ngram_order_);
  return embedding_.encode(tokens);
}

template class BasicLinearClassifier<float>;
template class BasicLinearClassifier<double>;

LinearClassifier new_classifier(HashEmbedding embedding, std::size_t num_classes,
                                std::uint64_t seed) {
  const std::size_t in = embedding.output_dim();
  std::vector<float> W(num_classes * in);
  Rng rng(seed ^ 0x5deece66dULL);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + num_classes));
  for (auto& w : W) w = static_cast<float>(rng.uniform(-limit, limit));
  return LinearClassifier(std::move(embedding), num_classes, std::move(W),
                          std::vector<float>(num_classes, 0.0f));
}

// ---- forward / backward ----------------------------------------------------------

template <typename Real>
std::span<const Real> forward(const BasicLinearClassifier<Real>& model,
                              std::span<const EncodedToken> tokens, Workspace<Real>& ws) {
  const std::size_t C = model.num_classes();
  ws.hidden.resize(model.input_dim());
  ws.logits.resize(C);
  ws.probs.resize(C);
  model.embedding().embed_bag(tokens, ws.hidden);
  Real max_logit = -std::numeric_limits<Real>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    ws.logits[c] = simd::dot(model.W_row(c), std::span<const Real>(ws.hidden)) + model.bias()[c];
    max_logit = std::max(max_logit, ws.logits[c]);
  }
  Real total = 0;
  for (std::size_t c = 0; c < C; ++c) {
    ws.probs[c] = std::exp(ws.logits[c] - max_logit);
    total += ws.probs[c];
  }
  for (auto& p : ws.probs) p /= total;
  return ws.probs;
}

template <typename Real>
std::vector<Real> forward(const BasicLinearClassifier<Real>& model,
                          std::span<const std::string> tokens) {
  Workspace<Real> ws;
  const auto encoded = model.embedding().encode(tokens);
  auto probs = forward(model, encoded, ws);
  return {probs.begin(), probs.end()};
}

template <typename Real>
Real cross_entropy(std::span<const Real> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw InputDomainError("label " + std::to_string(label) + " outside " +
                           std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], Real(1e-12)));
}

template <typename Real>
void ModelGradients<Real>::clear() {
  std::fill(W.begin(), W.end(), Real(0));
  std::fill(bias.begin(), bias.end(), Real(0));
  embedding.clear();
}

template <typename Real>
void ModelGradients<Real>::add(const ModelGradients& other) {
  for (std::size_t i = 0; i < W.size(); ++i) W[i] += other.W[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += other.bias[i];
  embedding.add(other.embedding);
}

template <typename Real>
void ModelGradients<Real>::scale(Real factor) {
  for (auto& w : W) w *= factor;
  for (auto& b : bias) b *= factor;
  embedding.scale(factor);
}

template <typename Real>
Real backward(const BasicLinearClassifier<Real>& model, std::span<const EncodedToken> tokens,
              std::size_t label, ModelGradients<Real>& grads, Workspace<Real>& ws) {
  const std::size_t C = model.num_classes();
  const std::size_t in = model.input_dim();
  if (grads.W.size() != C * in || grads.bias.size() != C) {
    throw InputDomainError("gradient buffers do not match the model");
  }
  forward(model, tokens, ws);
  const Real loss = cross_entropy<Real>(ws.probs, label);

  // d loss / d logits = probs - onehot(label)
  auto& g = ws.logits;
  for (std::size_t c = 0; c < C; ++c) g[c] = ws.probs[c] - (c == label ? Real(1) : Real(0));

  ws.upstream.assign(in, Real(0));
  const std::span<const Real> hidden(ws.hidden);
  for (std::size_t c = 0; c < C; ++c) {
    simd::axpy(g[c], hidden, std::span<Real>(grads.W.data() + c * in, in));
    grads.bias[c] += g[c];
    simd::axpy(g[c], model.W_row(c), std::span<Real>(ws.upstream));
  }
  model.embedding().backward_bag(tokens, ws.upstream, grads.embedding);
  return loss;
}

template <typename Real>
ModelGradients<Real> backward(const BasicLinearClassifier<Real>& model,
                              std::span<const std::string> tokens, std::size_t label) {
  ModelGradients<Real> grads(model);
  Workspace<Real> ws;
  const auto encoded = model.embedding().encode(tokens);
  backward(model, encoded, label, grads, ws);
  return grads;
}

template <typename Real>
Real batch_gradient(const BasicLinearClassifier<Real>& model,
                    std::span<const std::span<const EncodedToken>> docs,
                    std::span<const std::uint32_t> labels, ModelGradients<Real>& out) {
  if (docs.size() != labels.size()) throw InputDomainError("docs and labels differ in length");
  if (docs.empty()) throw InputDomainError("empty batch");
  out = ModelGradients<Real>(model);
  ModelGradients<Real> sample(model);
  Workspace<Real> ws;
  Real loss = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    sample.clear();
    loss += backward(model, docs[i], labels[i], sample, ws);
    out.add(sample);
  }
  const Real inv = Real(1) / static_cast<Real>(docs.size());
  out.scale(inv);
  return loss * inv;
}

#define HASHEMB_INSTANTIATE(Real)                                                          \
  template std::span<const Real> forward(const BasicLinearClassifier<Real>&,              \
                                         std::span<const EncodedToken>, Workspace<Real>&); \
  template std::vector<Real> forward(const BasicLinearClassifier<Real>&,                  \
                                     std::span<const std::string>);                       \
  template Real cross_entropy(std::span<const Real>, std::size_t);                        \
  template struct ModelGradients<Real>;                                                   \
  template Real backward(const BasicLinearClassifier<Real>&, std::span<const EncodedToken>, \
                         std::size_t, ModelGradients<Real>&, Workspace<Real>&);           \
  template ModelGradients<Real> backward(const BasicLinearClassifier<Real>&,              \
                                         std::span<const std::string>, std::size_t);      \
  template Real batch_gradient(const BasicLinearClassifier<Real>&,                        \
                               std::span<const std::span<const EncodedToken>>,            \
                               std::span<const std::uint32_t>, ModelGradients<Real>&);

HASHEMB_INSTANTIATE(float)
HASHEMB_INSTANTIATE(double)
#undef HASHEMB_INSTANTIATE

// ---- Adam ------------------------------------------------------------------------

AdamState::AdamState(const LinearClassifier& model, AdamConfig config)
    : config_(config),
      m_W_(model.W().size(), 0.0f),
      v_W_(model.W().size(), 0.0f),
      m_b_(model.num_classes(), 0.0f),
      v_b_(model.num_classes(), 0.0f),
      m_E_(model.embedding().E().size(), 0.0f),
      v_E_(model.embedding().E().size(), 0.0f),
      m_P_(model.embedding().P().size(), 0.0f),
      v_P_(model.embedding().P().size(), 0.0f) {}

void AdamState::apply(LinearClassifier& model, const ModelGradients<float>& grads,
                      float grad_scale) {
  if (grads.W.size() != m_W_.size() || grads.bias.size() != m_b_.size()) {
    throw InputDomainError("Adam gradients do not match the model");
  }
  ++t_;
  simd::AdamCoefficients c;
  c.alpha = static_cast<float>(config_.alpha);
  c.beta1 = static_cast<float>(config_.beta1);
  c.beta2 = static_cast<float>(config_.beta2);
  c.epsilon = static_cast<float>(config_.epsilon);
  const double t = static_cast<double>(t_);
  c.inv_bias1 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta1, t)));
  c.inv_bias2 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta2, t)));
  c.grad_scale = grad_scale;

  simd::adam_update(model.W_mut(), m_W_, v_W_, grads.W, c);
  simd::adam_update(model.bias_mut(), m_b_, v_b_, grads.bias, c);

  auto& emb = model.embedding();
  const std::size_t d = emb.d();
  const std::size_t k = emb.k();
  auto E = emb.E_mut();
  const auto& e_rows = grads.embedding.e_rows;
  for (std::size_t s = 0; s < e_rows.size(); ++s) {
    const std::uint64_t b = e_rows.key_at(s);
    if (b >= emb.config().B || emb.is_frozen_bucket(b)) {
      throw InputDomainError("E gradient row " + std::to_string(b) + " is not trainable");
    }
    const std::size_t off = static_cast<std::size_t>(b) * d;
    simd::adam_update(E.subspan(off, d), std::span(m_E_).subspan(off, d),
                      std::span(v_E_).subspan(off, d), e_rows.row_at(s), c);
  }
  const auto& p_rows = grads.embedding.p_rows;
  if (!p_rows.empty() && !emb.config().importance_trainable()) {
    throw InputDomainError("importance parameters of this embedding are fixed");
  }
  auto P = emb.P_mut();
  for (std::size_t s = 0; s < p_rows.size(); ++s) {
    const std::uint64_t id = p_rows.key_at(s);
    if (id >= emb.config().K) throw InputDomainError("P gradient row out of range");
    const std::size_t off = static_cast<std::size_t>(id) * k;
    simd::adam_update(P.subspan(off, k), std::span(m_P_).subspan(off, k),
                      std::span(v_P_).subspan(off, k), p_rows.row_at(s), c);
  }
#ifndef NDEBUG
  if (!emb.all_finite()) throw std::logic_error("non-finite embedding parameter after Adam step");
#endif
}

// ---- ensembles ---------------------------------------------------------------------

std::vector<double> ensemble_predict(std::span<const LinearClassifier> models,
                                     std::span<const std::string> tokens) {
  if (models.empty()) throw InputDomainError("empty ensemble");
  const std::size_t C = models.front().num_classes();
  for (const auto& m : models) {
    if (m.num_classes() != C) throw InputDomainError("ensemble members disagree on class count");
  }
  std::vector<double> sum(C, 0.0);
  Workspace<float> ws;
  for (const auto& m : models) {
    const auto encoded = m.embedding().encode(tokens);
    auto probs = forward(m, encoded, ws);
    for (std::size_t c = 0; c < C; ++c) sum[c] += static_cast<double>(probs[c]);
  }
  for (auto& s : sum) s /= static_cast<double>(models.size());
  return sum;
}

// ---- importance ----------------------------------------------------------------------

std::vector<ImportanceEntry> top_importance(const LinearClassifier& model,
                                            const Vocabulary& vocab, std::size_t n,
                                            ImportanceOrder order) {
  const auto& emb = model.embedding();
  if (emb.config().id_mode != IdMode::dictionary) {
    throw UnsupportedModeError("importance inspection needs dictionary token ids; hashed ids "
                               "cannot be mapped back to tokens");
  }
  std::vector<ImportanceEntry> entries;
  entries.reserve(vocab.size());
  for (std::uint64_t id = 1; id <= vocab.size(); ++id) {
    const std::string& token = vocab.token(id);
    const auto enc = emb.encode(token);
    auto row = emb.P_row(enc.importance_id);
    ImportanceEntry e;
    e.token = token;
    e.id = id;
    e.importance.assign(row.begin(), row.end());
    for (float p : row) e.magnitude = std::max(e.magnitude, std::fabs(p));
    entries.push_back(std::move(e));
  }
  if (order == ImportanceOrder::largest) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.magnitude > b.magnitude; });
  } else {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.magnitude < b.magnitude; });
  }
  if (entries.size() > n) entries.resize(n);
  return entries;
}

// ---- bundle ----------------------------------------------------------------------------

void save_model(std::ostream& out, const LinearClassifier& model) {
  save_embedding(out, model.embedding());
  io::BinaryWriter w(out);
  w.u64(model.num_classes());
  w.u64(model.input_dim());
  w.u64(model.ngram_order());
  w.f32(model.W());
  w.f32(model.bias());
  if (!out) throw FormatError("failed to write model");
}

void save_model(const std::filesystem::path& path, const LinearClassifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  save_model(out, model);
}

LinearClassifier load_model(std::istream& in) {
  auto emb = load_embedding(in);
  io::BinaryReader r(in);
  const std::uint64_t classes = r.u64();
  const std::uint64_t in_dim = r.u64();
  const std::uint64_t order = r.u64();
  if (classes == 0 || classes > (1u << 20)) throw FormatError("implausible class count");
  if (in_dim != emb.output_dim()) {
    throw FormatError("classifier input dimension " + std::to_string(in_dim) +
                      " does not match embedding output " + std::to_string(emb.output_dim()));
  }
  if (order == 0) throw FormatError("n-gram order must be positive");
  auto W = r.f32(classes * in_dim);
  auto bias = r.f32(classes);
  LinearClassifier model(std::move(emb), classes, std::move(W), std::move(bias));
  model.set_ngram_order(order);
  return model;
}

LinearClassifier load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  return load_model(in);
}

std::string model_bytes(const LinearClassifier& model) {
  std::ostringstream out(std::ios::binary);
  save_model(out, model);
  return std::move(out).str();
}

}  // namespace hashemb
