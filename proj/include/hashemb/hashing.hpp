#pragma once

// Seeded hash family, the two-layer token -> id -> bucket mapping, and
// closed-form / Monte Carlo collision analytics.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hashemb {

struct HashSeed {
  std::uint64_t value = 0;
  friend bool operator==(HashSeed, HashSeed) = default;
};

/// MurmurHash64A over `bytes`, reading 8-byte blocks as little-endian so the
/// result is identical on every platform.
std::uint64_t seeded_hash(HashSeed seed, std::span<const std::byte> bytes) noexcept;
std::uint64_t seeded_hash(HashSeed seed, std::string_view bytes) noexcept;

/// Hash of the 8-byte little-endian encoding of `id`.
std::uint64_t seeded_hash_u64(HashSeed seed, std::uint64_t id) noexcept;

/// SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// `n` pairwise-distinct seeds drawn deterministically from `base`.
std::vector<HashSeed> derive_seeds(std::uint64_t base, std::size_t n);

/// Enrolled token -> id table for dictionary mode. Id 0 is reserved for
/// unknown tokens, so enrolled ids must be >= 1 and unique.
class Dictionary {
 public:
  Dictionary() = default;

  /// Throws InputDomainError on a duplicate token, a duplicate id or id 0.
  void add(std::string token, std::uint64_t id);

  std::optional<std::uint64_t> find(std::string_view token) const;
  std::size_t size() const noexcept { return ids_.size(); }
  std::uint64_t max_id() const noexcept { return max_id_; }

  /// (token, id) pairs ordered by id.
  std::vector<std::pair<std::string, std::uint64_t>> entries() const;

 private:
  std::unordered_map<std::string, std::uint64_t> ids_;
  std::unordered_map<std::uint64_t, std::string> tokens_;
  std::uint64_t max_id_ = 0;
};

enum class IdMode : std::uint8_t { hashed = 0, dictionary = 1 };

inline constexpr std::uint64_t kUnknownId = 0;

/// First hashing layer D1: token -> {0, ..., K-1}.
class TokenIdMap {
 public:
  static TokenIdMap hashed(HashSeed seed, std::uint64_t K);
  /// Unenrolled tokens map to kUnknownId, or to `seed`-hashed ids when
  /// `hash_unknown` is set.
  static TokenIdMap dictionary(std::shared_ptr<const Dictionary> dict,
                               std::uint64_t K, HashSeed seed = {},
                               bool hash_unknown = false);

  std::uint64_t operator()(std::string_view token) const;

  IdMode mode() const noexcept { return mode_; }
  std::uint64_t K() const noexcept { return K_; }
  HashSeed seed() const noexcept { return seed_; }
  bool hash_unknown() const noexcept { return hash_unknown_; }
  const std::shared_ptr<const Dictionary>& dictionary() const noexcept {
    return dict_;
  }

 private:
  TokenIdMap() = default;

  IdMode mode_ = IdMode::hashed;
  std::uint64_t K_ = 1;
  HashSeed seed_{};
  bool hash_unknown_ = false;
  std::shared_ptr<const Dictionary> dict_;
};

/// Second hashing layer: k independently seeded id -> bucket functions
/// D2^1..D2^k, or the identity map used by the standard-embedding and
/// hashing-trick special cases.
class BucketMapper {
 public:
  static BucketMapper hashed(std::vector<HashSeed> seeds, std::uint64_t K,
                             std::uint64_t B);
  /// k = 1, bucket = id. Requires K <= B.
  static BucketMapper identity(std::uint64_t K, std::uint64_t B);

  std::size_t k() const noexcept { return identity_ ? 1 : seeds_.size(); }
  std::uint64_t K() const noexcept { return K_; }
  std::uint64_t B() const noexcept { return B_; }
  bool is_identity() const noexcept { return identity_; }
  const std::vector<HashSeed>& seeds() const noexcept { return seeds_; }

  /// Fills out[0..k) without range checking `id`.
  void map(std::uint64_t id, std::span<std::uint64_t> out) const noexcept;

  /// Range-checked; throws InputDomainError when id >= K.
  std::vector<std::uint64_t> buckets_for_id(std::uint64_t id) const;

 private:
  BucketMapper() = default;

  std::vector<HashSeed> seeds_;
  std::uint64_t K_ = 1;
  std::uint64_t B_ = 1;
  bool identity_ = false;
};

// ---- collision analytics -------------------------------------------------

/// 1 - (1 - 1/K)^(n-1): probability that a given token shares its slot with
/// at least one of the other n-1 tokens.
double collision_probability(std::uint64_t K, std::uint64_t vocab_size);

/// 1 - exp(-n/K).
double collision_probability_approx(double K, double vocab_size);

/// n * collision_probability(K, n).
double expected_collisions(std::uint64_t K, std::uint64_t vocab_size);

/// collision_probability_approx(B^k, n) with B^k formed in log space.
double combined_collision_probability(std::uint64_t B, std::uint64_t k,
                                      double vocab_size);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Mean number of tokens sharing a slot with at least one other token when
/// `vocab_size` tokens are assigned uniformly to K slots.
/// Throws InputDomainError when trials < 2 or K == 0.
MonteCarloEstimate simulate_collisions(std::uint64_t K, std::uint64_t vocab_size,
                                       std::uint64_t trials, std::uint64_t seed);

struct CollisionReport {
  std::uint64_t K = 1;
  std::uint64_t vocab_size = 1;
  double p_col_exact = 0.0;
  double p_col_approx = 0.0;
  double expected_tokens_in_collision = 0.0;
  std::optional<MonteCarloEstimate> monte_carlo;
};

CollisionReport make_collision_report(std::uint64_t K, std::uint64_t vocab_size);

}  // namespace hashemb
