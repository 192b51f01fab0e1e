#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "byteprobe/cnn.hpp"

namespace byteprobe {

struct LabeledSample {
  std::string id;
  std::vector<std::uint8_t> bytes;  // nonempty
  int label = 0;                    // malware = 1, goodware = 0
};

struct DecaySchedule {
  double factor = 0.5;          // multiplied into the learning rate...
  std::size_t every_epochs = 3;  // ...once per this many epochs
};

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  double momentum = 0.9;
  DecaySchedule decay;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::string regime = "baseline";  // small | baseline | baseline+dropout

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean BCE per epoch
  std::vector<double> val_loss;    // empty when no validation set was given
};

// SGD with classical momentum (v <- mu*v - lr*g, w <- w + v) on binary
// cross-entropy, with multiplicative per-epoch learning-rate decay.
// Deterministic for a fixed (config.seed, dataset order).
TrainHistory train(CnnModel& model, const std::vector<LabeledSample>& train_set,
                   const std::vector<LabeledSample>& val_set, const TrainConfig& config);

struct Metrics {
  double f1 = 0.0;
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// F1 from the confusion matrix at threshold 0.5; AUC from the rank statistic
// (average ranks on ties).  Throws MetricError on a single-class dataset.
Metrics evaluate(const CnnModel& model, const std::vector<LabeledSample>& dataset);

// Same metrics from precomputed scores; exposed for tests.
Metrics metrics_from_scores(const std::vector<double>& scores,
                            const std::vector<int>& labels);

// Mean inference-mode BCE over a dataset.
double mean_loss(const CnnModel& model, const std::vector<LabeledSample>& dataset);

}  // namespace byteprobe
