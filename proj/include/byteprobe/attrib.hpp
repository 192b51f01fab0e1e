#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "byteprobe/cnn.hpp"
#include "byteprobe/pe.hpp"
#include "byteprobe/x86.hpp"

namespace byteprobe {

struct AttributionConfig {
  std::size_t n_samples = 1000;   // Monte Carlo draws
  double smoothing_sigma = 0.0;   // stddev of optional local noise; 0 = none
  std::uint64_t seed = 0;

  void validate() const;
};

struct ByteAttribution {
  std::vector<double> phi;  // one value per input byte position
  double model_output = 0.0;
  double expected_background = 0.0;  // mean model output over the background set
};

// Scalar-valued differentiable function of an embedded input, e.g. the
// classifier probability.  Tests plug in closed-form models here.
using EmbeddedFn = std::function<Tensor(const Tensor&)>;

// Expected gradients over an embedded input: repeatedly pick a background
// sample b and alpha ~ U(0,1), evaluate the gradient at b + alpha*(x-b), and
// average gradient * (x-b) elementwise.  Deterministic for a fixed seed.
std::vector<double> expected_gradients(const EmbeddedFn& f, const Tensor& input,
                                       const std::vector<Tensor>& backgrounds,
                                       const AttributionConfig& config);

// Precomputes embedded background tensors once per explanation batch.
std::vector<Tensor> embed_backgrounds(const CnnModel& model,
                                      const std::vector<std::vector<int>>& background_symbols);

// Full pipeline for the classifier: explanation runs in embedding space and
// each byte's value is the sum of its embedding-dimension attributions.
ByteAttribution gradient_shap(const CnnModel& model, const std::vector<int>& symbols,
                              const std::vector<Tensor>& embedded_backgrounds,
                              const AttributionConfig& config);
ByteAttribution gradient_shap(const CnnModel& model, const std::vector<int>& symbols,
                              const std::vector<std::vector<int>>& background_symbols,
                              const AttributionConfig& config);

struct Segment {
  std::size_t start = 0;  // half-open byte span
  std::size_t end = 0;
  double value = 0.0;     // sum of phi over the span
  int sign = 0;           // +1 toward malware, -1 toward goodware
};

// Maximal contiguous same-sign runs.  Zero bytes extend the running segment
// (leading zeros before the first signed value are dropped), so segment
// values always sum to the per-byte total exactly.
std::vector<Segment> segment(const std::vector<double>& phi);
std::vector<Segment> segment(const ByteAttribution& attribution);

struct AnnotatedSegment {
  Segment seg;
  std::string region;   // region kind, or "Padding(input)"
  std::string detail;   // e.g. section name
  std::string feature;  // named semantics when the span hits one (checksum,
                        // security directory, Rich header, an import name)
  std::string strings;  // dual rendering of the leading window bytes
  std::vector<Instruction> instructions;
};

// The n largest-|value| segments of each sign, annotated against the parsed
// file.  Segments that start in the preprocessing pad are excluded unless
// include_padding is set.
std::vector<AnnotatedSegment> top_segments(const std::vector<Segment>& segments,
                                           const PeImage& pe, const RegionMap& regions,
                                           const std::vector<std::uint8_t>& bytes,
                                           std::size_t n, bool include_padding = false);

// File offset of the 8-byte security data-directory entry in the optional
// header (the bytes that are zero when a file is unsigned).
std::size_t security_dir_entry_offset(const PeImage& pe);

}  // namespace byteprobe
