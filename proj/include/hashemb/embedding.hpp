#pragma once

// Hash embeddings: a shared pool E of B component vectors (d wide), a K x k
// table P of importance parameters, and k hash functions choosing which
// component vectors a token combines.
//
//   id      = D1(token)                      in {0..K-1}
//   b_i     = D2^i(id)                       in {0..B-1}, i = 1..k
//   e_hat   = sum_i P[id][i] * E[b_i]
//   e       = e_hat ++ P[id]                 (optional, append_importance)
//
// The hashing trick (k = 1, P = 1 frozen, bucket = hashed id) and the
// standard embedding (dictionary ids, bucket = id, P = 1 frozen) are built
// from the same structure.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hashemb/hashing.hpp"

namespace hashemb {

enum class EmbeddingKind : std::uint8_t {
  hash = 0,
  hashing_trick = 1,
  standard = 2,
};

struct EmbeddingConfig {
  std::uint64_t K = 1;  // importance rows / token id range
  std::uint64_t B = 1;  // component vectors
  std::uint64_t k = 1;  // hash functions
  std::uint64_t d = 1;  // component vector width
  IdMode id_mode = IdMode::hashed;
  bool append_importance = false;
  bool separate_importance_hash = false;
  /// Dictionary mode only: hash unenrolled tokens instead of using id 0.
  bool hash_unknown = false;
  EmbeddingKind kind = EmbeddingKind::hash;

  /// Throws InputDomainError.
  void validate() const;

  std::size_t output_dim() const noexcept {
    return static_cast<std::size_t>(d + (append_importance ? k : 0));
  }
  bool importance_trainable() const noexcept { return kind == EmbeddingKind::hash; }

  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

/// Trainable parameters: B*d + K*k for hash embeddings, B*d for the hashing
/// trick (P is fixed), (K-1)*d for the standard embedding (row 0 is the
/// frozen unknown-token vector).
std::uint64_t parameter_count(const EmbeddingConfig& config);

/// A token after the first hashing layer.
struct EncodedToken {
  std::uint64_t id = 0;
  std::uint64_t importance_id = 0;
  friend bool operator==(EncodedToken, EncodedToken) = default;
};

/// Row-keyed gradient accumulator. Rows are kept in first-touch order so
/// iteration, and therefore every update built from it, is deterministic.
template <typename Real>
class SparseRows {
 public:
  explicit SparseRows(std::size_t width = 0) : width_(width) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }

  /// Zero-initialised on first touch.
  std::span<Real> row(std::uint64_t key);
  /// Empty span when `key` was never touched.
  std::span<const Real> find(std::uint64_t key) const;

  std::uint64_t key_at(std::size_t slot) const { return keys_[slot]; }
  std::span<Real> row_at(std::size_t slot) {
    return {values_.data() + slot * width_, width_};
  }
  std::span<const Real> row_at(std::size_t slot) const {
    return {values_.data() + slot * width_, width_};
  }
  const std::vector<std::uint64_t>& keys() const noexcept { return keys_; }

  void clear();
  void scale(Real factor);
  /// this += other, visiting other's rows in their order.
  void add(const SparseRows& other);

 private:
  std::size_t width_;
  std::unordered_map<std::uint64_t, std::size_t> slot_;
  std::vector<std::uint64_t> keys_;
  std::vector<Real> values_;
};

template <typename Real>
struct SparseGrad {
  SparseRows<Real> e_rows;  // bucket -> d
  SparseRows<Real> p_rows;  // importance id -> k

  SparseGrad() = default;
  SparseGrad(std::size_t d, std::size_t k) : e_rows(d), p_rows(k) {}

  bool empty() const noexcept { return e_rows.empty() && p_rows.empty(); }
  void clear() {
    e_rows.clear();
    p_rows.clear();
  }
  void scale(Real factor) {
    e_rows.scale(factor);
    p_rows.scale(factor);
  }
  void add(const SparseGrad& other) {
    e_rows.add(other.e_rows);
    p_rows.add(other.p_rows);
  }
};

template <typename Real>
class BasicHashEmbedding {
 public:
  using value_type = Real;

  /// Low-level constructor; prefer new_hash_embedding / as_hashing_trick /
  /// as_standard_embedding. `seeds` holds the k bucket seeds, then the id
  /// seed, then the importance-id seed.
  BasicHashEmbedding(EmbeddingConfig config, std::vector<HashSeed> seeds,
                     std::shared_ptr<const Dictionary> dictionary, std::vector<Real> E,
                     std::vector<Real> P);

  const EmbeddingConfig& config() const noexcept { return config_; }
  std::size_t output_dim() const noexcept { return config_.output_dim(); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(config_.d); }
  std::size_t k() const noexcept { return static_cast<std::size_t>(config_.k); }
  const std::vector<HashSeed>& seeds() const noexcept { return seeds_; }
  const TokenIdMap& id_map() const noexcept { return id_map_; }
  const TokenIdMap& importance_id_map() const noexcept { return importance_map_; }
  const BucketMapper& bucket_mapper() const noexcept { return mapper_; }
  const std::shared_ptr<const Dictionary>& dictionary() const noexcept {
    return id_map_.dictionary();
  }

  std::span<const Real> E() const noexcept { return E_; }
  std::span<const Real> P() const noexcept { return P_; }
  std::span<Real> E_mut() noexcept { return E_; }
  std::span<Real> P_mut() noexcept { return P_; }
  std::span<const Real> E_row(std::uint64_t bucket) const {
    return {E_.data() + bucket * config_.d, d()};
  }
  std::span<const Real> P_row(std::uint64_t id) const {
    return {P_.data() + id * config_.k, k()};
  }

  /// Standard embeddings keep E row 0 (unknown token) frozen at zero.
  bool is_frozen_bucket(std::uint64_t bucket) const noexcept {
    return config_.kind == EmbeddingKind::standard && bucket == kUnknownId;
  }

  EncodedToken encode(std::string_view token) const;
  std::vector<EncodedToken> encode(std::span<const std::string> tokens) const;

  /// out.size() == output_dim(); overwritten.
  void embed_token(EncodedToken token, std::span<Real> out) const;
  std::vector<Real> embed_token(std::string_view token) const;

  /// Sum of token embeddings; zero for an empty bag. out is overwritten.
  void embed_bag(std::span<const EncodedToken> tokens, std::span<Real> out) const;
  std::vector<Real> embed_bag(std::span<const std::string> tokens) const;

  /// Accumulates d(loss)/d(E rows) and d(loss)/d(P rows) into `grad` given
  /// d(loss)/d(bag embedding). Throws InputDomainError on a size mismatch.
  void backward_bag(std::span<const EncodedToken> tokens, std::span<const Real> upstream,
                    SparseGrad<Real>& grad) const;
  SparseGrad<Real> backward_bag(std::span<const std::string> tokens,
                                std::span<const Real> upstream) const;

  /// Adds `delta` to the referenced rows. Throws InputDomainError for
  /// out-of-range keys, width mismatches, or rows of frozen tables.
  void apply_sparse_update(const SparseGrad<Real>& delta);

  bool all_finite() const;

  template <typename To>
  BasicHashEmbedding<To> cast() const {
    return BasicHashEmbedding<To>(config_, seeds_, dictionary(),
                                  std::vector<To>(E_.begin(), E_.end()),
                                  std::vector<To>(P_.begin(), P_.end()));
  }

 private:
  EmbeddingConfig config_;
  std::vector<HashSeed> seeds_;
  TokenIdMap id_map_;
  TokenIdMap importance_map_;
  BucketMapper mapper_;
  std::vector<Real> E_;  // B x d, row-major
  std::vector<Real> P_;  // K x k, row-major
};

using HashEmbedding = BasicHashEmbedding<float>;

/// E ~ U(-1/d, 1/d), P = 1 (row 0 = 0 in dictionary mode), k + 2 seeds
/// derived from `init_seed`. Dictionary mode requires `dictionary` with ids
/// below config.K. Throws ResourceError if the tables cannot be allocated.
HashEmbedding new_hash_embedding(const EmbeddingConfig& config, std::uint64_t init_seed,
                                 std::shared_ptr<const Dictionary> dictionary = nullptr);

/// k = 1, K = B, hashed ids, bucket = id, P fixed to 1.
HashEmbedding as_hashing_trick(std::uint64_t B, std::uint64_t d, std::uint64_t seed);

/// One dedicated row per vocabulary entry (ids 1..|vocab| in list order) plus
/// a frozen zero row 0 for unknown tokens. Throws InputDomainError on
/// duplicate tokens.
HashEmbedding as_standard_embedding(std::span<const std::string> vocab, std::uint64_t d,
                                    std::uint64_t init_seed);

// ---- serialization ---------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

void save_embedding(std::ostream& out, const HashEmbedding& emb);
/// Throws FormatError on bad magic, unsupported version or truncation.
HashEmbedding load_embedding(std::istream& in);

/// Bitwise equality of configuration, seeds, dictionary and parameters.
bool bitwise_equal(const HashEmbedding& a, const HashEmbedding& b);

extern template class SparseRows<float>;
extern template class SparseRows<double>;
extern template class BasicHashEmbedding<float>;
extern template class BasicHashEmbedding<double>;

}  // namespace hashemb
