#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "byteprobe/attrib.hpp"
#include "byteprobe/cnn.hpp"
#include "byteprobe/train.hpp"

namespace byteprobe {

struct ImportPlant {
  std::string dll;
  std::string function;
  double p_malware = 0.0;
  double p_goodware = 0.0;
};

// Knobs of the synthetic PE corpus.  Per-feature plant probabilities are
// conditioned on the (true) class; defaults leave headroom so trained
// models separate well without the task being trivial.
struct CorpusSpec {
  std::size_t count = 2000;
  double malware_ratio = 0.2;  // 20:80 mirrors the imbalanced regime

  double p_zero_checksum_malware = 0.7;
  double p_zero_checksum_goodware = 0.05;
  double p_security_dir_malware = 0.15;  // probability the file is "signed"
  double p_security_dir_goodware = 0.85;
  double p_rich_malware = 0.25;  // probability the Rich header is present
  double p_rich_goodware = 0.85;
  std::vector<ImportPlant> imports;  // empty = default_imports()
  double p_motif_malware = 0.8;  // push/push/push/call code motif
  double p_motif_goodware = 0.08;
  std::size_t motif_min_reps = 8;
  std::size_t motif_max_reps = 24;
  double p_pe32_plus = 0.1;
  double p_exports = 0.25;  // independent of class: parser coverage only

  double label_noise = 0.02;
  std::size_t min_size = 3072;
  std::size_t max_size = 8192;
  std::uint64_t seed = 42;

  static std::vector<ImportPlant> default_imports();
  void validate() const;
};

CorpusSpec corpus_spec_from_json_text(const std::string& text);
std::string corpus_spec_to_json_text(const CorpusSpec& spec);

struct PlantedFeature {
  std::string name;  // "zero-checksum", "push-call-motif", "import:...", ...
  std::size_t start = 0;
  std::size_t end = 0;
  bool malware_oriented = false;  // plant probability is higher for malware
};

struct ManifestEntry {
  std::string id;
  int label = 0;  // after label noise; what training sees
  std::size_t size = 0;
  std::vector<PlantedFeature> features;
};

struct Manifest {
  CorpusSpec spec;
  std::vector<ManifestEntry> entries;  // generation order
};

struct GeneratedCorpus {
  Manifest manifest;
  std::vector<LabeledSample> samples;  // generation order, ids match manifest
};

// Bit-reproducible from (spec, spec.seed).  Every file is a well-formed
// minimal PE that parses without warnings; the manifest records the exact
// byte span of every planted feature.
GeneratedCorpus generate_corpus(const CorpusSpec& spec);

void write_corpus(const GeneratedCorpus& corpus, const std::string& dir);
GeneratedCorpus load_corpus(const std::string& dir);

struct SplitCorpus {
  std::vector<LabeledSample> train, validation, test;
};

// Split by generation order (the time-split analog): earlier files train,
// later files validate and test.
SplitCorpus split_corpus(const std::vector<LabeledSample>& samples, double train_frac,
                         double val_frac);

// A balanced 50:50 subset of `samples`, taking the earliest files of each
// class (the "small dataset" analog).
std::vector<LabeledSample> balanced_subset(const std::vector<LabeledSample>& samples);

struct RegimeConfig {
  std::string name;  // small | baseline | dropout
  TrainConfig train;
  bool use_dropout = false;
  bool balanced_train = false;
};

struct RegimesConfig {
  ModelConfig model;  // shared architecture
  double train_frac = 0.6;
  double val_frac = 0.15;
  std::vector<RegimeConfig> regimes;

  static RegimesConfig desk_default();
};

struct RegimeResult {
  std::string name;
  CnnModel model;
  TrainHistory history;
  Metrics test_metrics;
};

// Trains the three regime analogs (small 50:50 subset, baseline full set,
// baseline+dropout) on a shared order-based split and evaluates each on the
// held-out test portion.
std::vector<RegimeResult> run_regimes(const std::vector<LabeledSample>& corpus,
                                      const RegimesConfig& config);

struct SampleAttribution {
  std::string id;
  std::vector<Segment> segments;  // padding already excluded
};

// Fraction of attributed samples whose top_n positive segments overlap at
// least one malware-oriented planted span.  Samples without any such span
// are skipped (they cannot be recalled); a sample id missing from the
// manifest is an input error.
double planted_feature_recall(const std::vector<SampleAttribution>& attributions,
                              const Manifest& manifest, std::size_t top_n);

}  // namespace byteprobe
