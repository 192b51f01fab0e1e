#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "byteprobe/cnn.hpp"
#include "byteprobe/pe.hpp"
#include "byteprobe/train.hpp"
#include "byteprobe/x86.hpp"

namespace byteprobe {

// One first-layer activation: filter f fired at window start `offset` with
// the given post-ReLU value.  Window starts map 1:1 to file offsets because
// the first layer has stride one.
struct ActivationRecord {
  std::string sample_id;
  int label = 0;
  std::size_t filter = 0;
  std::size_t offset = 0;
  double value = 0.0;
  std::size_t input_len = 0;  // model input length the record was taken at
};

// The k largest values over all (filter, position) pairs of the first conv
// layer, sorted descending; ties break to (lower filter, lower offset) so
// reruns are bit-identical.
std::vector<ActivationRecord> top_k_activations(const CnnModel& model,
                                                const LabeledSample& sample,
                                                std::size_t k = 100);

// Counts per key (filter index, or offset-bucket start), split by class.
struct ClassSplitHistogram {
  std::vector<std::size_t> keys;
  std::vector<std::size_t> malware;   // label 1 counts, same length as keys
  std::vector<std::size_t> goodware;  // label 0 counts
  std::size_t bucket_size = 1;

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) t += malware[i] + goodware[i];
    return t;
  }
};

ClassSplitHistogram aggregate_by_filter(const std::vector<ActivationRecord>& records,
                                        std::size_t filter_count);
// bucket_size == 0 picks input_len/100 (resolution-independent default).
ClassSplitHistogram aggregate_by_offset(const std::vector<ActivationRecord>& records,
                                        std::size_t bucket_size);

struct ActivationAnnotation {
  std::string region;  // region kind, or "Padding(input)" past end of file
  std::string detail;  // section name etc., when the region has one
  std::size_t window_start = 0;
  std::size_t window_end = 0;
  std::string strings;
  std::vector<Instruction> instructions;
};

// Region lookup plus the dual string/instruction rendering of the bytes
// around the activation window ([offset-context, offset+kernel+context)).
ActivationAnnotation annotate_activation(const ActivationRecord& record,
                                         const std::vector<std::uint8_t>& bytes,
                                         const RegionMap& regions,
                                         std::size_t kernel_width = 11,
                                         std::size_t context = 16);

}  // namespace byteprobe
