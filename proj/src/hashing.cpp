#include "hashemb/hashing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "hashemb/errors.hpp"
#include "hashemb/random.hpp"

namespace hashemb {

namespace {

inline std::uint64_t load_le64(const std::byte* p) noexcept {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  if constexpr (std::endian::native == std::endian::big) {
    v = __builtin_bswap64(v);
  }
  return v;
}

}  // namespace

std::uint64_t seeded_hash(HashSeed seed, std::span<const std::byte> bytes) noexcept {
  constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
  constexpr int r = 47;
  const std::size_t len = bytes.size();

  std::uint64_t h = seed.value ^ (len * m);

  const std::byte* data = bytes.data();
  const std::byte* end = data + (len / 8) * 8;
  for (; data != end; data += 8) {
    std::uint64_t k = load_le64(data);
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }

  const auto tail = [&](std::size_t i) {
    return static_cast<std::uint64_t>(std::to_integer<unsigned char>(data[i]));
  };
  switch (len & 7) {
    case 7: h ^= tail(6) << 48; [[fallthrough]];
    case 6: h ^= tail(5) << 40; [[fallthrough]];
    case 5: h ^= tail(4) << 32; [[fallthrough]];
    case 4: h ^= tail(3) << 24; [[fallthrough]];
    case 3: h ^= tail(2) << 16; [[fallthrough]];
    case 2: h ^= tail(1) << 8; [[fallthrough]];
    case 1:
      h ^= tail(0);
      h *= m;
  }

  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

std::uint64_t seeded_hash(HashSeed seed, std::string_view bytes) noexcept {
  return seeded_hash(seed, std::as_bytes(std::span(bytes.data(), bytes.size())));
}

std::uint64_t seeded_hash_u64(HashSeed seed, std::uint64_t id) noexcept {
  std::byte buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<std::byte>((id >> (8 * i)) & 0xff);
  }
  return seeded_hash(seed, std::span<const std::byte>(buf, 8));
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<HashSeed> derive_seeds(std::uint64_t base, std::size_t n) {
  std::vector<HashSeed> out;
  out.reserve(n);
  std::uint64_t state = base;
  while (out.size() < n) {
    HashSeed s{splitmix64(state)};
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

// ---- Dictionary ------------------------------------------------------------

void Dictionary::add(std::string token, std::uint64_t id) {
  if (id == kUnknownId) {
    throw InputDomainError("dictionary id 0 is reserved for unknown tokens");
  }
  if (ids_.contains(token)) {
    throw InputDomainError("duplicate dictionary token '" + token + "'");
  }
  if (tokens_.contains(id)) {
    throw InputDomainError("duplicate dictionary id " + std::to_string(id));
  }
  tokens_.emplace(id, token);
  ids_.emplace(std::move(token), id);
  max_id_ = std::max(max_id_, id);
}

std::optional<std::uint64_t> Dictionary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, std::uint64_t>> Dictionary::entries() const {
  std::vector<std::pair<std::string, std::uint64_t>> out(ids_.begin(), ids_.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return out;
}

// ---- TokenIdMap ------------------------------------------------------------

TokenIdMap TokenIdMap::hashed(HashSeed seed, std::uint64_t K) {
  if (K == 0) throw InputDomainError("token id range K must be positive");
  TokenIdMap m;
  m.mode_ = IdMode::hashed;
  m.K_ = K;
  m.seed_ = seed;
  return m;
}

TokenIdMap TokenIdMap::dictionary(std::shared_ptr<const Dictionary> dict,
                                  std::uint64_t K, HashSeed seed,
                                  bool hash_unknown) {
  if (!dict) throw InputDomainError("dictionary mode requires a token table");
  if (K == 0 || dict->max_id() >= K) {
    throw InputDomainError("dictionary ids must lie below K=" + std::to_string(K));
  }
  TokenIdMap m;
  m.mode_ = IdMode::dictionary;
  m.K_ = K;
  m.seed_ = seed;
  m.hash_unknown_ = hash_unknown;
  m.dict_ = std::move(dict);
  return m;
}

std::uint64_t TokenIdMap::operator()(std::string_view token) const {
  if (mode_ == IdMode::dictionary) {
    if (auto id = dict_->find(token)) return *id;
    if (!hash_unknown_) return kUnknownId;
  }
  return seeded_hash(seed_, token) % K_;
}

// ---- BucketMapper ------------------------------------------------------------

BucketMapper BucketMapper::hashed(std::vector<HashSeed> seeds, std::uint64_t K,
                                  std::uint64_t B) {
  if (seeds.empty()) throw InputDomainError("bucket mapper needs k >= 1 seeds");
  if (K == 0 || B == 0) throw InputDomainError("K and B must be positive");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      if (seeds[i] == seeds[j]) {
        throw InputDomainError("bucket hash seeds must be distinct");
      }
    }
  }
  BucketMapper m;
  m.seeds_ = std::move(seeds);
  m.K_ = K;
  m.B_ = B;
  return m;
}

BucketMapper BucketMapper::identity(std::uint64_t K, std::uint64_t B) {
  if (K == 0 || B == 0 || K > B) {
    throw InputDomainError("identity bucket mapping requires 0 < K <= B");
  }
  BucketMapper m;
  m.K_ = K;
  m.B_ = B;
  m.identity_ = true;
  return m;
}

void BucketMapper::map(std::uint64_t id, std::span<std::uint64_t> out) const noexcept {
  if (identity_) {
    out[0] = id;
    return;
  }
  for (std::size_t i = 0; i < seeds_.size(); ++i) {
    out[i] = seeded_hash_u64(seeds_[i], id) % B_;
  }
}

std::vector<std::uint64_t> BucketMapper::buckets_for_id(std::uint64_t id) const {
  if (id >= K_) {
    throw InputDomainError("id " + std::to_string(id) + " outside [0, " +
                           std::to_string(K_) + ")");
  }
  std::vector<std::uint64_t> out(k());
  map(id, out);
  return out;
}

// ---- collision analytics -----------------------------------------------------

double collision_probability(std::uint64_t K, std::uint64_t vocab_size) {
  if (K == 0 || vocab_size == 0) {
    throw InputDomainError("collision_probability requires K >= 1 and |T| >= 1");
  }
  if (vocab_size == 1) return 0.0;
  if (K == 1) return 1.0;
  const double others = static_cast<double>(vocab_size - 1);
  // (1 - 1/K)^others = exp(others * log1p(-1/K))
  return -std::expm1(others * std::log1p(-1.0 / static_cast<double>(K)));
}

double collision_probability_approx(double K, double vocab_size) {
  if (!(K >= 1.0)) throw InputDomainError("collision_probability_approx requires K >= 1");
  return -std::expm1(-vocab_size / K);
}

double expected_collisions(std::uint64_t K, std::uint64_t vocab_size) {
  return static_cast<double>(vocab_size) * collision_probability(K, vocab_size);
}

double combined_collision_probability(std::uint64_t B, std::uint64_t k,
                                      double vocab_size) {
  if (B == 0 || k == 0) {
    throw InputDomainError("combined_collision_probability requires B, k >= 1");
  }
  // n / B^k = exp(log n - k log B)
  if (vocab_size <= 0.0) return 0.0;
  const double log_ratio =
      std::log(vocab_size) - static_cast<double>(k) * std::log(static_cast<double>(B));
  return -std::expm1(-std::exp(log_ratio));
}

MonteCarloEstimate simulate_collisions(std::uint64_t K, std::uint64_t vocab_size,
                                       std::uint64_t trials, std::uint64_t seed) {
  if (trials < 2) throw InputDomainError("simulate_collisions requires trials >= 2");
  if (K == 0) throw InputDomainError("simulate_collisions requires K >= 1");

  Rng rng(seed);
  // Direct counting when the slot table is small, sort-based otherwise.
  const bool dense = K <= std::max<std::uint64_t>(1u << 20, 4 * vocab_size);
  std::vector<std::uint32_t> counts(dense ? K : 0);
  std::vector<std::uint64_t> draws(vocab_size);

  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint64_t colliding = 0;
    if (dense) {
      std::fill(counts.begin(), counts.end(), 0);
      for (auto& d : draws) {
        d = rng.below(K);
        ++counts[d];
      }
      for (auto d : draws) colliding += counts[d] > 1;
    } else {
      for (auto& d : draws) d = rng.below(K);
      std::sort(draws.begin(), draws.end());
      for (std::size_t i = 0; i < draws.size();) {
        std::size_t j = i + 1;
        while (j < draws.size() && draws[j] == draws[i]) ++j;
        if (j - i > 1) colliding += j - i;
        i = j;
      }
    }
    const auto c = static_cast<double>(colliding);
    sum += c;
    sum_sq += c * c;
  }

  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

CollisionReport make_collision_report(std::uint64_t K, std::uint64_t vocab_size) {
  CollisionReport r;
  r.K = K;
  r.vocab_size = vocab_size;
  r.p_col_exact = collision_probability(K, vocab_size);
  r.p_col_approx =
      collision_probability_approx(static_cast<double>(K), static_cast<double>(vocab_size));
  r.expected_tokens_in_collision = static_cast<double>(vocab_size) * r.p_col_exact;
  return r;
}

}  // namespace hashemb
