#include "hashemb/embedding.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <cmath>
#include <limits>
#include <new>
#include <unordered_set>

#include "binary_io.hpp"
#include "hashemb/errors.hpp"
#include "hashemb/kernels.hpp"
#include "hashemb/random.hpp"

namespace hashemb {

namespace {

constexpr std::uint64_t kMaxHashFunctions = 64;
constexpr char kMagic[4] = {'H', 'E', 'M', 'B'};

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw InputDomainError(std::string(what) + " overflows 64 bits");
  }
  return a * b;
}

template <typename Real>
std::vector<Real> allocate(std::uint64_t count, Real fill) {
  const std::uint64_t bytes = checked_mul(count, sizeof(Real), "parameter table size");
  try {
    return std::vector<Real>(static_cast<std::size_t>(count), fill);
  } catch (const std::bad_alloc&) {
    throw ResourceError("cannot allocate embedding parameters",
                        static_cast<std::size_t>(bytes));
  } catch (const std::length_error&) {
    throw ResourceError("cannot allocate embedding parameters",
                        static_cast<std::size_t>(bytes));
  }
}

/// k bucket indices without heap traffic for the common small-k case.
class BucketBuffer {
 public:
  explicit BucketBuffer(std::size_t k) : k_(k) {
    if (k > inline_.size()) heap_.resize(k);
  }
  std::span<std::uint64_t> span() {
    return heap_.empty() ? std::span<std::uint64_t>(inline_.data(), k_)
                         : std::span<std::uint64_t>(heap_);
  }

 private:
  std::size_t k_;
  std::array<std::uint64_t, 8> inline_{};
  std::vector<std::uint64_t> heap_;
};

}  // namespace

// ---- EmbeddingConfig ---------------------------------------------------------

void EmbeddingConfig::validate() const {
  if (K == 0 || B == 0 || k == 0 || d == 0) {
    throw InputDomainError("embedding config requires K, B, k, d >= 1");
  }
  if (k > kMaxHashFunctions) {
    throw InputDomainError("at most " + std::to_string(kMaxHashFunctions) +
                           " hash functions are supported");
  }
  checked_mul(B, d, "B*d");
  checked_mul(K, k, "K*k");
  if (kind != EmbeddingKind::hash) {
    if (k != 1) throw InputDomainError("special-case embeddings use k = 1");
    if (K > B) throw InputDomainError("special-case embeddings need K <= B");
    if (separate_importance_hash) {
      throw InputDomainError("special-case embeddings have no importance hash");
    }
  }
  if (kind == EmbeddingKind::hashing_trick && id_mode != IdMode::hashed) {
    throw InputDomainError("the hashing trick uses hashed token ids");
  }
  if (kind == EmbeddingKind::standard && id_mode != IdMode::dictionary) {
    throw InputDomainError("the standard embedding uses dictionary token ids");
  }
}

std::uint64_t parameter_count(const EmbeddingConfig& config) {
  switch (config.kind) {
    case EmbeddingKind::hash:
      return config.B * config.d + config.K * config.k;
    case EmbeddingKind::hashing_trick:
      return config.B * config.d;
    case EmbeddingKind::standard:
      return (config.K - 1) * config.d;
  }
  return 0;
}

// ---- SparseRows ----------------------------------------------------------------

template <typename Real>
std::span<Real> SparseRows<Real>::row(std::uint64_t key) {
  auto [it, inserted] = slot_.try_emplace(key, keys_.size());
  if (inserted) {
    keys_.push_back(key);
    values_.resize(values_.size() + width_, Real(0));
  }
  return {values_.data() + it->second * width_, width_};
}

template <typename Real>
std::span<const Real> SparseRows<Real>::find(std::uint64_t key) const {
  auto it = slot_.find(key);
  if (it == slot_.end()) return {};
  return {values_.data() + it->second * width_, width_};
}

template <typename Real>
void SparseRows<Real>::clear() {
  slot_.clear();
  keys_.clear();
  values_.clear();
}

template <typename Real>
void SparseRows<Real>::scale(Real factor) {
  for (auto& v : values_) v *= factor;
}

template <typename Real>
void SparseRows<Real>::add(const SparseRows& other) {
  if (other.width_ != width_) throw InputDomainError("sparse row width mismatch");
  for (std::size_t s = 0; s < other.size(); ++s) {
    auto src = other.row_at(s);
    auto dst = row(other.key_at(s));
    for (std::size_t j = 0; j < width_; ++j) dst[j] += src[j];
  }
}

// ---- BasicHashEmbedding ------------------------------------------------------------

namespace {

TokenIdMap make_id_map(const EmbeddingConfig& c, HashSeed seed,
                       std::shared_ptr<const Dictionary> dict) {
  if (c.id_mode == IdMode::dictionary) {
    return TokenIdMap::dictionary(std::move(dict), c.K, seed, c.hash_unknown);
  }
  return TokenIdMap::hashed(seed, c.K);
}

}  // namespace

template <typename Real>
BasicHashEmbedding<Real>::BasicHashEmbedding(EmbeddingConfig config,
                                             std::vector<HashSeed> seeds,
                                             std::shared_ptr<const Dictionary> dictionary,
                                             std::vector<Real> E, std::vector<Real> P)
    : config_((config.validate(), config)),
      seeds_(std::move(seeds)),
      id_map_(TokenIdMap::hashed(HashSeed{}, 1)),
      importance_map_(TokenIdMap::hashed(HashSeed{}, 1)),
      mapper_(BucketMapper::identity(1, 1)),
      E_(std::move(E)),
      P_(std::move(P)) {
  const std::size_t k = static_cast<std::size_t>(config_.k);
  if (seeds_.size() != k + 2) {
    throw InputDomainError("hash embedding needs k + 2 seeds");
  }
  if (E_.size() != config_.B * config_.d || P_.size() != config_.K * config_.k) {
    throw InputDomainError("parameter table sizes do not match the config");
  }
  id_map_ = make_id_map(config_, seeds_[k], dictionary);
  importance_map_ = config_.separate_importance_hash
                        ? TokenIdMap::hashed(seeds_[k + 1], config_.K)
                        : id_map_;
  if (config_.kind == EmbeddingKind::hash) {
    mapper_ = BucketMapper::hashed({seeds_.begin(), seeds_.begin() + k}, config_.K,
                                   config_.B);
  } else {
    mapper_ = BucketMapper::identity(config_.K, config_.B);
  }
}

template <typename Real>
EncodedToken BasicHashEmbedding<Real>::encode(std::string_view token) const {
  const std::uint64_t id = id_map_(token);
  const std::uint64_t imp = config_.separate_importance_hash ? importance_map_(token) : id;
  return {id, imp};
}

template <typename Real>
std::vector<EncodedToken> BasicHashEmbedding<Real>::encode(
    std::span<const std::string> tokens) const {
  std::vector<EncodedToken> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(encode(t));
  return out;
}

template <typename Real>
void BasicHashEmbedding<Real>::embed_token(EncodedToken token, std::span<Real> out) const {
  embed_bag(std::span<const EncodedToken>(&token, 1), out);
}

template <typename Real>
std::vector<Real> BasicHashEmbedding<Real>::embed_token(std::string_view token) const {
  std::vector<Real> out(output_dim());
  embed_token(encode(token), out);
  return out;
}

template <typename Real>
void BasicHashEmbedding<Real>::embed_bag(std::span<const EncodedToken> tokens,
                                         std::span<Real> out) const {
  if (out.size() != output_dim()) {
    throw InputDomainError("embedding output buffer has the wrong size");
  }
  std::fill(out.begin(), out.end(), Real(0));
  const std::size_t dd = d();
  const std::size_t kk = k();
  auto head = out.first(dd);
  BucketBuffer buf(kk);
  auto buckets = buf.span();
  for (const EncodedToken& t : tokens) {
    mapper_.map(t.id, buckets);
    auto p = P_row(t.importance_id);
    for (std::size_t i = 0; i < kk; ++i) {
      simd::axpy(p[i], E_row(buckets[i]), head);
    }
    if (config_.append_importance) {
      for (std::size_t i = 0; i < kk; ++i) out[dd + i] += p[i];
    }
  }
}

template <typename Real>
std::vector<Real> BasicHashEmbedding<Real>::embed_bag(
    std::span<const std::string> tokens) const {
  std::vector<Real> out(output_dim());
  const auto encoded = encode(tokens);
  embed_bag(encoded, out);
  return out;
}

template <typename Real>
void BasicHashEmbedding<Real>::backward_bag(std::span<const EncodedToken> tokens,
                                            std::span<const Real> upstream,
                                            SparseGrad<Real>& grad) const {
  if (upstream.size() != output_dim()) {
    throw InputDomainError("upstream gradient has dimension " +
                           std::to_string(upstream.size()) + ", expected " +
                           std::to_string(output_dim()));
  }
  const std::size_t dd = d();
  const std::size_t kk = k();
  if (grad.e_rows.width() != dd || grad.p_rows.width() != kk) {
    if (!grad.empty()) throw InputDomainError("gradient accumulator has the wrong shape");
    grad = SparseGrad<Real>(dd, kk);
  }
  const auto g_e = upstream.first(dd);
  const bool train_p = config_.importance_trainable();
  BucketBuffer buf(kk);
  auto buckets = buf.span();
  for (const EncodedToken& t : tokens) {
    mapper_.map(t.id, buckets);
    auto p = P_row(t.importance_id);
    for (std::size_t i = 0; i < kk; ++i) {
      if (!is_frozen_bucket(buckets[i])) {
        simd::axpy(p[i], g_e, grad.e_rows.row(buckets[i]));
      }
    }
    if (train_p) {
      auto gp = grad.p_rows.row(t.importance_id);
      for (std::size_t i = 0; i < kk; ++i) {
        Real v = simd::dot(g_e, E_row(buckets[i]));
        if (config_.append_importance) v += upstream[dd + i];
        gp[i] += v;
      }
    }
  }
}

template <typename Real>
SparseGrad<Real> BasicHashEmbedding<Real>::backward_bag(std::span<const std::string> tokens,
                                                        std::span<const Real> upstream) const {
  SparseGrad<Real> grad(d(), k());
  const auto encoded = encode(tokens);
  backward_bag(encoded, upstream, grad);
  return grad;
}

template <typename Real>
void BasicHashEmbedding<Real>::apply_sparse_update(const SparseGrad<Real>& delta) {
  if (!delta.e_rows.empty() && delta.e_rows.width() != d()) {
    throw InputDomainError("E update width does not match d");
  }
  if (!delta.p_rows.empty()) {
    if (delta.p_rows.width() != k()) throw InputDomainError("P update width does not match k");
    if (!config_.importance_trainable()) {
      throw InputDomainError("importance parameters of this embedding are fixed");
    }
  }
  for (std::uint64_t key : delta.e_rows.keys()) {
    if (key >= config_.B) throw InputDomainError("E row " + std::to_string(key) + " out of range");
    if (is_frozen_bucket(key)) throw InputDomainError("E row 0 is frozen");
  }
  for (std::uint64_t key : delta.p_rows.keys()) {
    if (key >= config_.K) throw InputDomainError("P row " + std::to_string(key) + " out of range");
  }
  for (std::size_t s = 0; s < delta.e_rows.size(); ++s) {
    auto src = delta.e_rows.row_at(s);
    Real* dst = E_.data() + delta.e_rows.key_at(s) * config_.d;
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t s = 0; s < delta.p_rows.size(); ++s) {
    auto src = delta.p_rows.row_at(s);
    Real* dst = P_.data() + delta.p_rows.key_at(s) * config_.k;
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
}

template <typename Real>
bool BasicHashEmbedding<Real>::all_finite() const {
  auto finite = [](Real v) { return std::isfinite(v); };
  return std::all_of(E_.begin(), E_.end(), finite) && std::all_of(P_.begin(), P_.end(), finite);
}

template class SparseRows<float>;
template class SparseRows<double>;
template class BasicHashEmbedding<float>;
template class BasicHashEmbedding<double>;

// ---- constructors ------------------------------------------------------------------

HashEmbedding new_hash_embedding(const EmbeddingConfig& config, std::uint64_t init_seed,
                                 std::shared_ptr<const Dictionary> dictionary) {
  config.validate();
  if (config.kind != EmbeddingKind::hash) {
    throw InputDomainError("new_hash_embedding builds EmbeddingKind::hash only");
  }
  if (config.id_mode == IdMode::dictionary && !dictionary) {
    throw InputDomainError("dictionary mode requires a token table");
  }
  auto seeds = derive_seeds(init_seed, static_cast<std::size_t>(config.k + 2));

  auto E = allocate<float>(config.B * config.d, 0.0f);
  Rng rng(init_seed);
  const double bound = 1.0 / static_cast<double>(config.d);
  for (auto& e : E) e = static_cast<float>(rng.uniform(-bound, bound));

  auto P = allocate<float>(config.K * config.k, 1.0f);
  if (config.id_mode == IdMode::dictionary && !config.hash_unknown) {
    std::fill_n(P.begin(), config.k, 0.0f);
  }
  return HashEmbedding(config, std::move(seeds),
                       config.id_mode == IdMode::dictionary ? std::move(dictionary) : nullptr,
                       std::move(E), std::move(P));
}

HashEmbedding as_hashing_trick(std::uint64_t B, std::uint64_t d, std::uint64_t seed) {
  EmbeddingConfig c;
  c.K = B;
  c.B = B;
  c.k = 1;
  c.d = d;
  c.id_mode = IdMode::hashed;
  c.kind = EmbeddingKind::hashing_trick;
  c.validate();

  auto seeds = derive_seeds(seed, 3);
  auto E = allocate<float>(B * d, 0.0f);
  Rng rng(seed);
  const double bound = 1.0 / static_cast<double>(d);
  for (auto& e : E) e = static_cast<float>(rng.uniform(-bound, bound));
  auto P = allocate<float>(B, 1.0f);
  return HashEmbedding(c, std::move(seeds), nullptr, std::move(E), std::move(P));
}

HashEmbedding as_standard_embedding(std::span<const std::string> vocab, std::uint64_t d,
                                    std::uint64_t init_seed) {
  auto dict = std::make_shared<Dictionary>();
  for (std::size_t i = 0; i < vocab.size(); ++i) dict->add(vocab[i], i + 1);

  EmbeddingConfig c;
  c.K = vocab.size() + 1;
  c.B = vocab.size() + 1;
  c.k = 1;
  c.d = d;
  c.id_mode = IdMode::dictionary;
  c.kind = EmbeddingKind::standard;
  c.validate();

  auto seeds = derive_seeds(init_seed, 3);
  auto E = allocate<float>(c.B * d, 0.0f);
  Rng rng(init_seed);
  const double bound = 1.0 / static_cast<double>(d);
  for (std::size_t i = d; i < E.size(); ++i) E[i] = static_cast<float>(rng.uniform(-bound, bound));
  auto P = allocate<float>(c.K, 1.0f);
  return HashEmbedding(c, std::move(seeds), std::move(dict), std::move(E), std::move(P));
}

// ---- serialization -----------------------------------------------------------------

void save_embedding(std::ostream& out, const HashEmbedding& emb) {
  io::BinaryWriter w(out);
  const auto& c = emb.config();
  w.bytes(kMagic, 4);
  w.u32(kEmbeddingFormatVersion);
  w.u64(c.K);
  w.u64(c.B);
  w.u64(c.k);
  w.u64(c.d);
  w.u8(static_cast<std::uint8_t>(c.id_mode));
  w.u8(c.append_importance);
  w.u8(c.separate_importance_hash);
  w.u8(c.hash_unknown);
  w.u8(static_cast<std::uint8_t>(c.kind));
  for (HashSeed s : emb.seeds()) w.u64(s.value);
  w.f32(emb.P());
  w.f32(emb.E());
  if (c.id_mode == IdMode::dictionary) {
    const auto entries = emb.dictionary()->entries();
    w.u64(entries.size());
    for (const auto& [token, id] : entries) {
      w.string(token);
      w.u64(id);
    }
  }
  if (!out) throw FormatError("failed to write embedding");
}

HashEmbedding load_embedding(std::istream& in) {
  io::BinaryReader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a hash embedding (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kEmbeddingFormatVersion) {
    throw FormatError("unsupported embedding format version " + std::to_string(version) +
                      " (expected " + std::to_string(kEmbeddingFormatVersion) + ")");
  }
  EmbeddingConfig c;
  c.K = r.u64();
  c.B = r.u64();
  c.k = r.u64();
  c.d = r.u64();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw FormatError("bad id mode");
  c.id_mode = static_cast<IdMode>(mode);
  c.append_importance = r.u8() != 0;
  c.separate_importance_hash = r.u8() != 0;
  c.hash_unknown = r.u8() != 0;
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw FormatError("bad embedding kind");
  c.kind = static_cast<EmbeddingKind>(kind);
  try {
    c.validate();
  } catch (const InputDomainError& e) {
    throw FormatError(std::string("invalid embedding header: ") + e.what());
  }

  std::vector<HashSeed> seeds(static_cast<std::size_t>(c.k + 2));
  for (auto& s : seeds) s.value = r.u64();
  auto P = r.f32(c.K * c.k);
  auto E = r.f32(c.B * c.d);
  std::shared_ptr<Dictionary> dict;
  if (c.id_mode == IdMode::dictionary) {
    dict = std::make_shared<Dictionary>();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string token = r.string();
      const std::uint64_t id = r.u64();
      try {
        dict->add(std::move(token), id);
      } catch (const InputDomainError& e) {
        throw FormatError(std::string("corrupt dictionary: ") + e.what());
      }
    }
  }
  try {
    return HashEmbedding(c, std::move(seeds), std::move(dict), std::move(E), std::move(P));
  } catch (const InputDomainError& e) {
    throw FormatError(std::string("inconsistent embedding: ") + e.what());
  }
}

bool bitwise_equal(const HashEmbedding& a, const HashEmbedding& b) {
  auto same_bits = [](std::span<const float> x, std::span<const float> y) {
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
  };
  if (!(a.config() == b.config()) || a.seeds() != b.seeds()) return false;
  if (!same_bits(a.E(), b.E()) || !same_bits(a.P(), b.P())) return false;
  const auto& da = a.dictionary();
  const auto& db = b.dictionary();
  if (static_cast<bool>(da) != static_cast<bool>(db)) return false;
  return !da || da->entries() == db->entries();
}

}  // namespace hashemb
