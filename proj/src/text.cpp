#include "hashemb/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hashemb/errors.hpp"

namespace hashemb {

// ---- tokenization ----------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto len = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  while (i < len) {
    UChar32 c;
    U8_NEXT(s, i, len, c);
    if (c < 0) {  // ill-formed UTF-8
      flush();
      continue;
    }
    if (u_isUWhiteSpace(c)) {
      flush();
      continue;
    }
    const std::uint32_t category = U_MASK(u_charType(c));
    if (category & (U_GC_P_MASK | U_GC_S_MASK)) continue;
    c = u_tolower(c);
    char buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, c);
    current.append(buf, static_cast<std::size_t>(n));
  }
  flush();
  return words;
}

std::vector<std::string> ngrams(std::span<const std::string> words, std::size_t n_max) {
  if (n_max == 0) throw InputDomainError("ngrams requires n_max >= 1");
  std::vector<std::string> out;
  const std::size_t L = words.size();
  const std::size_t top = std::min(n_max, L);
  std::size_t total = 0;
  for (std::size_t n = 1; n <= top; ++n) total += L - n + 1;
  out.reserve(total);
  for (std::size_t n = 1; n <= top; ++n) {
    for (std::size_t start = 0; start + n <= L; ++start) {
      std::string gram = words[start];
      for (std::size_t j = 1; j < n; ++j) {
        gram += '_';
        gram += words[start + j];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

std::vector<std::string> text_to_tokens(std::string_view text, std::size_t n_max) {
  const auto words = tokenize(text);
  return ngrams(words, n_max);
}

// ---- CSV ----------------------------------------------------------------------------

namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

/// Splits `data` into records. Quoted fields may contain commas, doubled
/// quotes and raw newlines.
class CsvReader {
 public:
  explicit CsvReader(std::string_view data) : data_(data) {}

  bool next(CsvRecord& rec) {
    // skip blank lines
    while (pos_ < data_.size() && (data_[pos_] == '\n' || data_[pos_] == '\r')) {
      if (data_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= data_.size()) return false;
    rec.fields.clear();
    rec.line = line_;
    for (;;) {
      rec.fields.push_back(field());
      if (pos_ >= data_.size()) return true;
      const char c = data_[pos_];
      if (c == ',') {
        ++pos_;
        continue;
      }
      if (c == '\r' && pos_ + 1 < data_.size() && data_[pos_ + 1] == '\n') ++pos_;
      if (data_[pos_] == '\n' || data_[pos_] == '\r') {
        ++pos_;
        ++line_;
        return true;
      }
      throw ParseError("unexpected character after quoted field", rec.line);
    }
  }

 private:
  std::string field() {
    std::string out;
    if (pos_ < data_.size() && data_[pos_] == '"') {
      const std::size_t start_line = line_;
      ++pos_;
      for (;;) {
        if (pos_ >= data_.size()) throw ParseError("unterminated quoted field", start_line);
        const char c = data_[pos_++];
        if (c == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            out += '"';
            ++pos_;
          } else {
            return out;
          }
        } else {
          if (c == '\n') ++line_;
          out += c;
        }
      }
    }
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == ',' || c == '\n' || c == '\r') break;
      if (c == '"') throw ParseError("stray quote in unquoted field", line_);
      out += c;
      ++pos_;
    }
    return out;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string unescape_newlines(std::string text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == 'n') {
      out += ' ';
      ++i;
    } else {
      out += text[i];
    }
  }
  return out;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

Dataset parse_dataset(std::istream& in, std::size_t num_classes, std::string name) {
  if (num_classes == 0) throw InputDomainError("num_classes must be positive");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Dataset ds;
  ds.num_classes = num_classes;
  ds.name = std::move(name);

  CsvReader reader(data);
  CsvRecord rec;
  while (reader.next(rec)) {
    if (rec.fields.size() < 2) {
      throw ParseError("expected a label and at least one text field", rec.line);
    }
    const std::string& lf = rec.fields[0];
    std::uint64_t label = 0;
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || lf.empty()) {
      throw ParseError("label '" + lf + "' is not an integer", rec.line);
    }
    if (label < 1 || label > num_classes) {
      throw ValidationError("label " + std::to_string(label) + " outside 1.." +
                            std::to_string(num_classes) + " (line " +
                            std::to_string(rec.line) + ")");
    }
    std::string text = rec.fields[1];
    for (std::size_t f = 2; f < rec.fields.size(); ++f) {
      text += ' ';
      text += rec.fields[f];
    }
    ds.samples.push_back({static_cast<std::uint32_t>(label - 1), unescape_newlines(std::move(text))});
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return parse_dataset(in, num_classes, path.string());
}

void save_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& s : dataset.samples) {
    out << quote(std::to_string(s.label + 1)) << ',' << quote(s.text) << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  save_dataset(out, dataset);
}

std::pair<Dataset, Dataset> split_validation(const Dataset& dataset, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InputDomainError("validation fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.samples.size();
  // The small slack keeps exact products (0.05 * 100) from rounding up.
  auto n_val = static_cast<std::size_t>(
      std::ceil(static_cast<long double>(n) * fraction - 1e-9L));
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  Dataset train{{}, dataset.num_classes, dataset.name};
  Dataset val{{}, dataset.num_classes, dataset.name};
  val.samples.reserve(n_val);
  train.samples.reserve(n - n_val);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_val ? val : train).samples.push_back(dataset.samples[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

// ---- Vocabulary -------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens_by_rank, std::size_t n_max,
                       std::size_t max_size)
    : tokens_(std::move(tokens_by_rank)), n_max_(n_max), max_size_(max_size) {
  if (max_size_ < tokens_.size()) max_size_ = tokens_.size();
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i + 1).second) {
      throw InputDomainError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::uint64_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnknownId : it->second;
}

std::shared_ptr<const Dictionary> Vocabulary::to_dictionary() const {
  auto dict = std::make_shared<Dictionary>();
  for (std::size_t i = 0; i < tokens_.size(); ++i) dict->add(tokens_[i], i + 1);
  return dict;
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << (i + 1) << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  save(out);
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::pair<std::uint64_t, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_max = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected token<TAB>id", line_no);
    std::uint64_t id = 0;
    const char* first = line.data() + tab + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || ptr != last || id == 0) throw ParseError("bad vocabulary id", line_no);
    std::string token = line.substr(0, tab);
    n_max = std::max<std::size_t>(n_max, 1 + std::count(token.begin(), token.end(), '_'));
    rows.emplace_back(id, std::move(token));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> tokens;
  tokens.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i + 1) throw ParseError("vocabulary ids must be dense from 1", 0);
    tokens.push_back(std::move(rows[i].second));
  }
  return Vocabulary(std::move(tokens), n_max, rows.size());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  return load(in);
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t n_max,
                       std::size_t max_size) {
  if (max_size == 0) throw InputDomainError("build_vocab requires max_size >= 1");
  struct Stat {
    std::uint64_t count = 0;
    std::uint64_t first = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::uint64_t seen = 0;
  for (const auto& text : corpus) {
    for (auto& gram : text_to_tokens(text, n_max)) {
      auto [it, inserted] = stats.try_emplace(std::move(gram));
      if (inserted) it->second.first = seen++;
      ++it->second.count;
    }
  }
  std::vector<std::pair<const std::string*, Stat>> ranked;
  ranked.reserve(stats.size());
  for (const auto& [token, stat] : stats) ranked.emplace_back(&token, stat);
  const std::size_t keep = std::min(max_size, ranked.size());
  auto by_rank = [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), by_rank);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(*ranked[i].first);
  return Vocabulary(std::move(tokens), n_max, max_size);
}

Vocabulary build_vocab(const Dataset& dataset, std::size_t n_max, std::size_t max_size) {
  std::vector<std::string> texts;
  texts.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) texts.push_back(s.text);
  return build_vocab(texts, n_max, max_size);
}

}  // namespace hashemb
