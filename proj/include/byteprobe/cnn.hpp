#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "byteprobe/rng.hpp"
#include "byteprobe/tensor.hpp"

namespace byteprobe {

// Symbol id used for positions past the end of a short file.  Byte values
// occupy 0..255, so the alphabet has kVocab symbols in total.
inline constexpr int kPaddingSymbol = 256;
inline constexpr std::size_t kVocab = 257;
inline constexpr std::size_t kEmbedDim = 10;

struct LayerConfig {
  std::size_t filters = 0;
  std::size_t kernel_width = 0;
  std::size_t pool_width = 0;
  std::size_t pool_stride = 0;
};

struct ModelConfig {
  std::size_t input_len = 4096;  // full-scale value: 102400
  std::size_t vocab = kVocab;
  std::size_t embed_dim = kEmbedDim;
  std::vector<LayerConfig> layers;  // five conv/pool blocks
  // Six rates: one at the embedding output, one after each block output.
  std::optional<std::vector<double>> dropout_rates;

  // 4KB inputs, blocks (96,11,4,4) (96,11,4,4) (128,11,4,4) (128,11,4,4)
  // (192,11,4,4).  Five poolings take 4096 positions down to 2 before the
  // global max.
  static ModelConfig desk_default();
  // 100KB inputs with the same block structure.
  static ModelConfig paper_default();
  static std::vector<double> standard_dropout_rates();  // 0.1,.25,.25,.25,.5,.5

  void validate() const;  // throws ConfigError

  // Sequence positions after embedding and after each conv and pool stage.
  // A pool window wider than what is left of the sequence shrinks to cover
  // it exactly (single window), which only ever happens at the last block.
  std::vector<std::size_t> stage_lengths() const;
};

struct CnnModel {
  ModelConfig config;
  Parameter embedding;                  // [vocab x embed_dim]
  std::vector<Parameter> conv_kernels;  // [filters x in_channels x width]
  std::vector<Parameter> conv_biases;   // [filters]
  Parameter dense_weights;              // [1 x last_filters]
  Parameter dense_bias;                 // [1]

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void set_trainable(bool trainable);
};

// First input_len bytes become symbols 0..255; the tail of a short file is
// filled with the padding symbol.  Result length is always input_len.
std::vector<int> preprocess(const std::vector<std::uint8_t>& bytes, std::size_t input_len);

// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic for a given seed.
CnnModel build_model(const ModelConfig& config, std::uint64_t seed);

// Embedded input [embed_dim x input_len] for a symbol sequence.
Tensor embed(const CnnModel& model, const std::vector<int>& symbols);

// Pre-sigmoid score.  `training` enables the configured dropout sites, which
// then draw their masks from `dropout_rng`.
Tensor forward_logit(const CnnModel& model, const Tensor& embedded, bool training,
                     Rng* dropout_rng = nullptr);

// sigmoid(forward_logit): classification probability as a graph node.
Tensor forward_from_embedded(const CnnModel& model, const Tensor& embedded,
                             bool training, Rng* dropout_rng = nullptr);

// Inference probability in (0,1); pure function of (parameters, input).
double predict(const CnnModel& model, const std::vector<int>& symbols);

// Post-ReLU output of the first convolutional layer, [filters x L-w+1].
// No graph is recorded; this is the probe's view of the model.
Tensor layer1_activations(const CnnModel& model, const std::vector<int>& symbols);

// Container format: magic "BSCN", u32 version, length-prefixed JSON config,
// then named little-endian f64 parameter blocks.
void save_model(const CnnModel& model, const std::string& path);
CnnModel load_model(const std::string& path);

std::vector<std::uint8_t> serialize_model(const CnnModel& model);
CnnModel deserialize_model(const std::vector<std::uint8_t>& bytes);

}  // namespace byteprobe
