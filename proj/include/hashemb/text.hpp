#pragma once

// Text preprocessing and datasets in the comma-separated, double-quoted
// classification format used by the AG News / DBPedia / Yelp / Yahoo /
// Amazon benchmark distributions:
//
//   "3","Title","Body text"
//
// The first field is the 1-based class index.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hashemb/hashing.hpp"
#include "hashemb/random.hpp"

namespace hashemb {

struct Sample {
  std::uint32_t label = 0;  // 0-based
  std::string text;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
  std::string name;
};

/// Lowercased words; characters in Unicode categories P* and S* are
/// removed, whitespace separates words, digits are kept.
std::vector<std::string> tokenize(std::string_view text);

/// All contiguous n-grams for n = 1..n_max in document order, words joined
/// with '_'. Throws InputDomainError when n_max == 0.
std::vector<std::string> ngrams(std::span<const std::string> words, std::size_t n_max);

/// tokenize() followed by ngrams().
std::vector<std::string> text_to_tokens(std::string_view text, std::size_t n_max);

inline constexpr std::size_t kMinSnippet = 4;
inline constexpr std::size_t kMaxSnippet = 100;

/// Random contiguous window of kMinSnippet..kMaxSnippet tokens (length drawn
/// first, clamped to the sequence, then a uniform start). Sequences of at
/// most kMinSnippet tokens are returned whole.
template <typename T>
std::span<const T> sample_snippet(std::span<const T> tokens, Rng& rng) {
  const std::size_t n = tokens.size();
  if (n <= kMinSnippet) return tokens;
  const std::size_t len = std::min<std::size_t>(rng.between(kMinSnippet, kMaxSnippet), n);
  const std::size_t start = rng.below(n - len + 1);
  return tokens.subspan(start, len);
}

/// Throws ParseError (with line number) on malformed rows and
/// ValidationError on labels outside 1..num_classes.
Dataset parse_dataset(std::istream& in, std::size_t num_classes, std::string name = {});
Dataset load_dataset(const std::filesystem::path& path, std::size_t num_classes);

/// Writes one `"label","text"` row per sample (1-based labels).
void save_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Deterministic shuffled split; the validation part has ceil(n * fraction)
/// samples (at least one, and at most n - 1 when n >= 2).
/// Throws InputDomainError unless 0 < fraction < 1.
std::pair<Dataset, Dataset> split_validation(const Dataset& dataset, double fraction,
                                             std::uint64_t seed);

/// Frequency-pruned n-gram vocabulary. Ids are dense in 1..size(); 0 is the
/// unknown token.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens_by_rank, std::size_t n_max, std::size_t max_size);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t n_max() const noexcept { return n_max_; }
  std::size_t max_size() const noexcept { return max_size_; }

  /// 0 for unknown tokens.
  std::uint64_t id(std::string_view token) const;
  /// Token for id in 1..size().
  const std::string& token(std::uint64_t id) const { return tokens_.at(id - 1); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::shared_ptr<const Dictionary> to_dictionary() const;

  /// UTF-8 lines "token<TAB>id".
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint64_t> ids_;
  std::size_t n_max_ = 1;
  std::size_t max_size_ = 0;
};

/// Keeps the max_size most frequent n-grams (n <= n_max); ties go to the
/// n-gram seen first. Throws InputDomainError when max_size == 0.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t n_max,
                       std::size_t max_size);
Vocabulary build_vocab(const Dataset& dataset, std::size_t n_max, std::size_t max_size);

}  // namespace hashemb
