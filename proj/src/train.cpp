#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "hashemb/errors.hpp"
#include "hashemb/model.hpp"
#include "hashemb/random.hpp"

namespace hashemb {

EncodedDataset encode_dataset(const LinearClassifier& model, const Dataset& dataset) {
  EncodedDataset out;
  out.num_classes = dataset.num_classes;
  out.docs.reserve(dataset.samples.size());
  out.labels.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    out.docs.push_back(model.encode_text(s.text));
    out.labels.push_back(s.label);
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InputDomainError("val_fraction must lie in (0, 1)");
  }
  if (patience < 1) throw InputDomainError("patience must be >= 1");
  if (batch_size < 1) throw InputDomainError("batch_size must be >= 1");
  if (max_epochs < 1) throw InputDomainError("max_epochs must be >= 1");
  if (!(adam.alpha > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
    throw InputDomainError("invalid Adam hyperparameters");
  }
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (best_epoch_ == 0 || val_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    return true;
  }
  return false;
}

namespace {

struct Snapshot {
  std::vector<float> E, P, W, bias;

  void take(const LinearClassifier& m) {
    const auto& emb = m.embedding();
    E.assign(emb.E().begin(), emb.E().end());
    P.assign(emb.P().begin(), emb.P().end());
    W.assign(m.W().begin(), m.W().end());
    bias.assign(m.bias().begin(), m.bias().end());
  }
  void restore(LinearClassifier& m) const {
    std::copy(E.begin(), E.end(), m.embedding().E_mut().begin());
    std::copy(P.begin(), P.end(), m.embedding().P_mut().begin());
    std::copy(W.begin(), W.end(), m.W_mut().begin());
    std::copy(bias.begin(), bias.end(), m.bias_mut().begin());
  }
};

}  // namespace

TrainHistory train(LinearClassifier& model, const EncodedDataset& train_set,
                   const EncodedDataset& val_set, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0) throw InputDomainError("training set is empty");
  if (val_set.size() == 0) throw InputDomainError("validation set is empty");
  if (train_set.num_classes != model.num_classes() || val_set.num_classes != model.num_classes()) {
    throw ValidationError("dataset class count does not match the model");
  }

  AdamState adam(model, config.adam);
  Rng rng(config.seed);
  EarlyStopping stopper(config.patience);
  Snapshot best;
  TrainHistory history;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ModelGradients<float> batch(model);
  ModelGradients<float> sample(model);
  Workspace<float> ws;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        const auto& doc = train_set.docs[order[i]];
        std::span<const EncodedToken> input(doc);
        if (config.snippets) input = sample_snippet(input, rng);
        sample.clear();
        loss_sum += backward(model, input, train_set.labels[order[i]], sample, ws);
        batch.add(sample);
      }
      adam.apply(model, batch, 1.0f / static_cast<float>(end - start));
    }

    const auto val = evaluate_detailed(model, val_set);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.mean_loss,
                    val.accuracy};
    history.epochs.push_back(rec);
    if (stopper.update(epoch, val.mean_loss)) best.take(model);
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop(epoch)) {
      history.early_stopped = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  best.restore(model);
  return history;
}

TrainHistory train(LinearClassifier& model, const Dataset& dataset, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.samples.empty()) throw InputDomainError("dataset is empty");
  auto [train_part, val_part] = split_validation(dataset, config.val_fraction, config.seed);
  const auto train_set = encode_dataset(model, train_part);
  const auto val_set = encode_dataset(model, val_part);
  return train(model, train_set, val_set, config, on_epoch);
}

// ---- evaluation ---------------------------------------------------------------------

namespace {

template <typename T>
std::size_t argmax_impl(std::span<const T> probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

struct Partial {
  std::vector<std::uint64_t> confusion;
  double loss = 0.0;
};

Partial evaluate_range(const LinearClassifier& model, const EncodedDataset& data,
                       std::size_t begin, std::size_t end) {
  const std::size_t C = model.num_classes();
  Partial p;
  p.confusion.assign(C * C, 0);
  Workspace<float> ws;
  for (std::size_t i = begin; i < end; ++i) {
    auto probs = forward(model, std::span<const EncodedToken>(data.docs[i]), ws);
    const std::size_t truth = data.labels[i];
    if (truth >= C) throw InputDomainError("label outside the model's classes");
    p.loss += cross_entropy<float>(probs, truth);
    ++p.confusion[truth * C + argmax_impl(probs)];
  }
  return p;
}

EvaluationResult finish(std::vector<std::uint64_t> confusion, double loss, std::size_t n,
                        std::size_t C) {
  EvaluationResult r;
  r.num_classes = C;
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < C; ++c) correct += confusion[c * C + c];
  r.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  r.mean_loss = n ? loss / static_cast<double>(n) : 0.0;
  r.confusion = std::move(confusion);
  return r;
}

}  // namespace

std::size_t argmax(std::span<const float> probs) { return argmax_impl(probs); }

EvaluationResult evaluate_detailed(const LinearClassifier& model, const EncodedDataset& data,
                                   std::size_t threads) {
  const std::size_t n = data.size();
  const std::size_t C = model.num_classes();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  std::vector<Partial> parts(threads);
  if (threads == 1) {
    parts[0] = evaluate_range(model, data, 0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          parts[t] = evaluate_range(model, data, n * t / threads, n * (t + 1) / threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<std::uint64_t> confusion(C * C, 0);
  double loss = 0.0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < confusion.size(); ++i) confusion[i] += p.confusion[i];
    loss += p.loss;
  }
  return finish(std::move(confusion), loss, n, C);
}

double evaluate(const LinearClassifier& model, const EncodedDataset& data, std::size_t threads) {
  return evaluate_detailed(model, data, threads).accuracy;
}

double evaluate(const LinearClassifier& model, const Dataset& data, std::size_t threads) {
  if (data.num_classes != model.num_classes()) {
    throw ValidationError("model has " + std::to_string(model.num_classes()) +
                          " classes but the dataset has " + std::to_string(data.num_classes));
  }
  return evaluate(model, encode_dataset(model, data), threads);
}

EvaluationResult evaluate_ensemble(std::span<const LinearClassifier> models,
                                   const Dataset& data) {
  if (models.empty()) throw InputDomainError("empty ensemble");
  const std::size_t C = models.front().num_classes();
  if (data.num_classes != C) {
    throw ValidationError("ensemble has " + std::to_string(C) + " classes but the dataset has " +
                          std::to_string(data.num_classes));
  }
  std::vector<std::uint64_t> confusion(C * C, 0);
  double loss = 0.0;
  for (const auto& s : data.samples) {
    std::map<std::size_t, std::vector<std::string>> tokens_by_order;
    std::vector<double> mean(C, 0.0);
    Workspace<float> ws;
    for (const auto& m : models) {
      if (m.num_classes() != C) throw InputDomainError("ensemble members disagree on class count");
      auto it = tokens_by_order.find(m.ngram_order());
      if (it == tokens_by_order.end()) {
        it = tokens_by_order.emplace(m.ngram_order(), text_to_tokens(s.text, m.ngram_order()))
                 .first;
      }
      const auto encoded = m.embedding().encode(it->second);
      auto probs = forward(m, encoded, ws);
      for (std::size_t c = 0; c < C; ++c) mean[c] += static_cast<double>(probs[c]);
    }
    for (auto& v : mean) v /= static_cast<double>(models.size());
    loss += -std::log(std::max(mean[s.label], 1e-12));
    ++confusion[s.label * C + argmax_impl<double>(mean)];
  }
  return finish(std::move(confusion), loss, data.samples.size(), C);
}

}  // namespace hashemb
