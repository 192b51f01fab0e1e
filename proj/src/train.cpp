#include "byteprobe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "byteprobe/errors.hpp"
#include "byteprobe/parallel.hpp"

namespace byteprobe {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum outside [0,1)");
  if (learning_rate < 0.0) throw ConfigError("train: negative learning rate");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (decay.factor <= 0.0) throw ConfigError("train: decay factor must be positive");
  if (decay.every_epochs < 1) throw ConfigError("train: decay interval must be >= 1");
}

namespace {

void check_both_classes(const std::vector<LabeledSample>& data, const char* who) {
  bool pos = false, neg = false;
  for (const auto& s : data) (s.label ? pos : neg) = true;
  if (!pos || !neg) {
    throw ConfigError(std::string(who) + ": dataset must contain both classes");
  }
}

double inference_loss(const CnnModel& model, const std::vector<int>& symbols, int label) {
  const double z = forward_logit(model, embed(model, symbols), false).item();
  return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

TrainHistory train(CnnModel& model, const std::vector<LabeledSample>& train_set,
                   const std::vector<LabeledSample>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: empty dataset");
  check_both_classes(train_set, "train");

  const std::size_t input_len = model.config.input_len;
  std::vector<std::vector<int>> symbols(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    symbols[i] = preprocess(train_set[i].bytes, input_len);
  }
  std::vector<std::vector<int>> val_symbols(val_set.size());
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    val_symbols[i] = preprocess(val_set[i].bytes, input_len);
  }

  model.set_trainable(true);
  const auto params = model.parameters();
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i].assign(params[i]->tensor.size(), 0.0);
  }

  const Rng root(config.seed);
  TrainHistory history;
  double lr = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0 && epoch % config.decay.every_epochs == 0) lr *= config.decay.factor;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.fork("shuffle", epoch);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (Parameter* p : params) p->tensor.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        Rng drop_rng = root.fork("dropout", epoch * train_set.size() + idx);
        Tensor z = forward_logit(model, embed(model, symbols[idx]), true, &drop_rng);
        Tensor loss = bce_with_logits(z, train_set[idx].label);
        backward(loss);
        epoch_loss += loss.item();
      }
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& t = params[pi]->tensor;
        if (!t.has_grad()) continue;
        const std::vector<double>& g = t.grad();
        std::vector<double>& v = velocity[pi];
        std::vector<double>& w = t.data();
        for (std::size_t j = 0; j < w.size(); ++j) {
          v[j] = config.momentum * v[j] - lr * g[j] * inv_batch;
          w[j] += v[j];
        }
      }
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));

    if (!val_set.empty()) {
      std::vector<double> losses(val_set.size());
      parallel_for(val_set.size(), 1, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          losses[i] = inference_loss(model, val_symbols[i], val_set[i].label);
        }
      });
      double total = 0.0;
      for (double l : losses) total += l;
      history.val_loss.push_back(total / static_cast<double>(val_set.size()));
    }
  }
  return history;
}

Metrics metrics_from_scores(const std::vector<double>& scores,
                            const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw InputError("metrics: scores and labels differ in length");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("metrics: AUC undefined on a single-class dataset");
  }

  Metrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    if (labels[i] == 1) (predicted ? m.tp : m.fn)++;
    else (predicted ? m.fp : m.tn)++;
  }
  m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;

  // Mann-Whitney AUC with average ranks on ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  m.auc = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
  return m;
}

Metrics evaluate(const CnnModel& model, const std::vector<LabeledSample>& dataset) {
  if (dataset.empty()) throw InputError("evaluate: empty dataset");
  std::vector<double> scores(dataset.size());
  std::vector<int> labels(dataset.size());
  parallel_for(dataset.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      scores[i] = predict(model, preprocess(dataset[i].bytes, model.config.input_len));
      labels[i] = dataset[i].label;
    }
  });
  return metrics_from_scores(scores, labels);
}

double mean_loss(const CnnModel& model, const std::vector<LabeledSample>& dataset) {
  if (dataset.empty()) throw InputError("mean_loss: empty dataset");
  std::vector<double> losses(dataset.size());
  parallel_for(dataset.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      losses[i] = inference_loss(model, preprocess(dataset[i].bytes, model.config.input_len),
                                 dataset[i].label);
    }
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(dataset.size());
}

}  // namespace byteprobe
