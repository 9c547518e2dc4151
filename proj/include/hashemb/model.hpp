#pragma once

// Bag-of-n-grams classifier: summed document embedding -> one dense layer ->
// softmax. Trained with cross-entropy and Adam (lazy on embedding rows).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hashemb/embedding.hpp"
#include "hashemb/text.hpp"

namespace hashemb {

template <typename Real>
class BasicLinearClassifier {
 public:
  using value_type = Real;

  /// W is num_classes x input_dim, row-major.
  BasicLinearClassifier(BasicHashEmbedding<Real> embedding, std::size_t num_classes,
                        std::vector<Real> W, std::vector<Real> bias);

  const BasicHashEmbedding<Real>& embedding() const noexcept { return embedding_; }
  BasicHashEmbedding<Real>& embedding() noexcept { return embedding_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t input_dim() const noexcept { return embedding_.output_dim(); }

  std::span<const Real> W() const noexcept { return W_; }
  std::span<Real> W_mut() noexcept { return W_; }
  std::span<const Real> W_row(std::size_t c) const {
    return {W_.data() + c * input_dim(), input_dim()};
  }
  std::span<const Real> bias() const noexcept { return bias_; }
  std::span<Real> bias_mut() noexcept { return bias_; }

  /// n-gram order the model was trained with; used to preprocess raw text.
  std::size_t ngram_order() const noexcept { return ngram_order_; }
  void set_ngram_order(std::size_t n) noexcept { ngram_order_ = n; }

  std::vector<EncodedToken> encode_text(std::string_view text) const;

  template <typename To>
  BasicLinearClassifier<To> cast() const {
    BasicLinearClassifier<To> out(embedding_.template cast<To>(), num_classes_,
                                  std::vector<To>(W_.begin(), W_.end()),
                                  std::vector<To>(bias_.begin(), bias_.end()));
    out.set_ngram_order(ngram_order_);
    return out;
  }

 private:
  BasicHashEmbedding<Real> embedding_;
  std::size_t num_classes_;
  std::vector<Real> W_;
  std::vector<Real> bias_;
  std::size_t ngram_order_ = 1;
};

using LinearClassifier = BasicLinearClassifier<float>;

/// Glorot-uniform W, zero bias.
LinearClassifier new_classifier(HashEmbedding embedding, std::size_t num_classes,
                                std::uint64_t seed);

/// Scratch buffers for forward/backward; reuse across calls to avoid
/// allocations in the training loop.
template <typename Real>
struct Workspace {
  std::vector<Real> hidden;
  std::vector<Real> logits;
  std::vector<Real> probs;
  std::vector<Real> upstream;
};

/// softmax(W * embed_bag(tokens) + bias), written to ws.probs.
template <typename Real>
std::span<const Real> forward(const BasicLinearClassifier<Real>& model,
                              std::span<const EncodedToken> tokens, Workspace<Real>& ws);

template <typename Real>
std::vector<Real> forward(const BasicLinearClassifier<Real>& model,
                          std::span<const std::string> tokens);

/// -log(max(probs[label], 1e-12)). Throws InputDomainError for bad labels.
template <typename Real>
Real cross_entropy(std::span<const Real> probs, std::size_t label);

template <typename Real>
struct ModelGradients {
  std::vector<Real> W;
  std::vector<Real> bias;
  SparseGrad<Real> embedding;

  ModelGradients() = default;
  explicit ModelGradients(const BasicLinearClassifier<Real>& model)
      : W(model.W().size(), Real(0)),
        bias(model.num_classes(), Real(0)),
        embedding(model.embedding().d(), model.embedding().k()) {}

  void clear();
  void add(const ModelGradients& other);
  void scale(Real factor);
};

/// Adds the gradient of cross_entropy(forward(tokens), label) to `grads` and
/// returns the loss.
template <typename Real>
Real backward(const BasicLinearClassifier<Real>& model, std::span<const EncodedToken> tokens,
              std::size_t label, ModelGradients<Real>& grads, Workspace<Real>& ws);

template <typename Real>
ModelGradients<Real> backward(const BasicLinearClassifier<Real>& model,
                              std::span<const std::string> tokens, std::size_t label);

/// Mean of per-sample gradients. Each sample is differentiated into its own
/// accumulator and the results are summed in batch order, so this equals
/// (sum of backward() results) * (1/n) exactly. Returns the mean loss.
template <typename Real>
Real batch_gradient(const BasicLinearClassifier<Real>& model,
                    std::span<const std::span<const EncodedToken>> docs,
                    std::span<const std::uint32_t> labels, ModelGradients<Real>& out);

// ---- Adam ------------------------------------------------------------------------

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Dense moments for W and bias; moments for E and P rows are only read and
/// written when the row appears in the step's gradient (lazy Adam), with
/// bias correction from the global step counter.
class AdamState {
 public:
  AdamState(const LinearClassifier& model, AdamConfig config);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return t_; }

  /// One update with gradients scaled by `grad_scale`.
  void apply(LinearClassifier& model, const ModelGradients<float>& grads,
             float grad_scale = 1.0f);

  std::span<const float> m_E() const noexcept { return m_E_; }
  std::span<const float> v_E() const noexcept { return v_E_; }
  std::span<const float> m_P() const noexcept { return m_P_; }
  std::span<const float> v_P() const noexcept { return v_P_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<float> m_W_, v_W_, m_b_, v_b_;
  std::vector<float> m_E_, v_E_, m_P_, v_P_;
};

inline void adam_step(AdamState& state, LinearClassifier& model,
                      const ModelGradients<float>& grads, float grad_scale = 1.0f) {
  state.apply(model, grads, grad_scale);
}

// ---- datasets --------------------------------------------------------------------

struct EncodedDataset {
  std::vector<std::vector<EncodedToken>> docs;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return docs.size(); }
};

/// Tokenizes, forms n-grams up to the model's ngram_order(), and applies the
/// first hashing layer.
EncodedDataset encode_dataset(const LinearClassifier& model, const Dataset& dataset);

// ---- training --------------------------------------------------------------------

struct TrainConfig {
  std::size_t patience = 10;
  double val_fraction = 0.05;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  bool snippets = true;
  AdamConfig adam{};

  /// Throws InputDomainError.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 before any epoch
  bool early_stopped = false;
};

/// Validation-loss monitor. Training stops once more than `patience` epochs
/// have passed since the best one.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records an epoch; returns true when it is a new best.
  bool update(std::size_t epoch, double val_loss);
  bool should_stop(std::size_t epoch) const noexcept {
    return best_epoch_ != 0 && epoch - best_epoch_ > patience_;
  }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch training with early stopping; the model ends with the
/// parameters of the best validation epoch. Deterministic given config.seed.
TrainHistory train(LinearClassifier& model, const EncodedDataset& train_set,
                   const EncodedDataset& val_set, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

/// Splits off config.val_fraction for validation, encodes, trains.
TrainHistory train(LinearClassifier& model, const Dataset& dataset, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

// ---- evaluation ------------------------------------------------------------------

struct EvaluationResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  /// confusion[truth * num_classes + predicted]
  std::vector<std::uint64_t> confusion;
  std::size_t num_classes = 0;
};

/// Ties in argmax go to the lowest class index.
std::size_t argmax(std::span<const float> probs);

EvaluationResult evaluate_detailed(const LinearClassifier& model, const EncodedDataset& data,
                                   std::size_t threads = 1);
double evaluate(const LinearClassifier& model, const EncodedDataset& data,
                std::size_t threads = 1);
/// Throws ValidationError when class counts differ.
double evaluate(const LinearClassifier& model, const Dataset& data, std::size_t threads = 1);

/// Arithmetic mean of member probabilities, summed in member order.
/// Throws InputDomainError for an empty ensemble or mismatched class counts.
std::vector<double> ensemble_predict(std::span<const LinearClassifier> models,
                                     std::span<const std::string> tokens);

/// Soft-voting accuracy over raw text. Each member preprocesses with its own
/// n-gram order and hash functions.
EvaluationResult evaluate_ensemble(std::span<const LinearClassifier> models,
                                   const Dataset& data);

// ---- importance inspection -------------------------------------------------------

enum class ImportanceOrder { largest, smallest };

struct ImportanceEntry {
  std::string token;
  std::uint64_t id = 0;
  std::vector<float> importance;
  float magnitude = 0.0f;  // max_i |importance[i]|
};

/// Throws UnsupportedModeError unless the embedding uses dictionary ids.
std::vector<ImportanceEntry> top_importance(const LinearClassifier& model,
                                            const Vocabulary& vocab, std::size_t n,
                                            ImportanceOrder order);

// ---- model bundle ----------------------------------------------------------------

/// Embedding serialization, then u64 num_classes, u64 input_dim,
/// u64 ngram_order, W and bias as little-endian float32.
void save_model(std::ostream& out, const LinearClassifier& model);
void save_model(const std::filesystem::path& path, const LinearClassifier& model);
LinearClassifier load_model(std::istream& in);
LinearClassifier load_model(const std::filesystem::path& path);

std::string model_bytes(const LinearClassifier& model);

extern template class BasicLinearClassifier<float>;
extern template class BasicLinearClassifier<double>;

}  // namespace hashemb
