#include "byteprobe/probe.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "byteprobe/errors.hpp"

namespace byteprobe {

std::vector<ActivationRecord> top_k_activations(const CnnModel& model,
                                                const LabeledSample& sample,
                                                std::size_t k) {
  const std::vector<int> symbols = preprocess(sample.bytes, model.config.input_len);
  const Tensor acts = layer1_activations(model, symbols);
  const std::size_t filters = acts.dim(0);
  const std::size_t positions = acts.dim(1);
  const std::vector<double>& v = acts.data();

  std::vector<std::size_t> idx(filters * positions);
  std::iota(idx.begin(), idx.end(), 0);
  // Flat index order is (filter, offset), so the index itself is the
  // tie-breaker: lower filter first, then lower offset.
  auto better = [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  };
  const std::size_t take = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    better);
  idx.resize(take);

  std::vector<ActivationRecord> records;
  records.reserve(take);
  for (std::size_t flat : idx) {
    ActivationRecord r;
    r.sample_id = sample.id;
    r.label = sample.label;
    r.filter = flat / positions;
    r.offset = flat % positions;
    r.value = v[flat];
    r.input_len = model.config.input_len;
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

std::size_t common_input_len(const std::vector<ActivationRecord>& records) {
  std::size_t len = 0;
  for (const ActivationRecord& r : records) {
    if (len == 0) len = r.input_len;
    if (r.input_len != len) {
      throw InputError("aggregate: records mix input lengths " + std::to_string(len) +
                       " and " + std::to_string(r.input_len));
    }
  }
  return len;
}

}  // namespace

ClassSplitHistogram aggregate_by_filter(const std::vector<ActivationRecord>& records,
                                        std::size_t filter_count) {
  common_input_len(records);
  ClassSplitHistogram h;
  h.bucket_size = 1;
  h.keys.resize(filter_count);
  std::iota(h.keys.begin(), h.keys.end(), 0);
  h.malware.assign(filter_count, 0);
  h.goodware.assign(filter_count, 0);
  for (const ActivationRecord& r : records) {
    if (r.filter >= filter_count) {
      throw InputError("aggregate_by_filter: filter " + std::to_string(r.filter) +
                       " outside [0, " + std::to_string(filter_count) + ")");
    }
    (r.label ? h.malware : h.goodware)[r.filter]++;
  }
  return h;
}

ClassSplitHistogram aggregate_by_offset(const std::vector<ActivationRecord>& records,
                                        std::size_t bucket_size) {
  const std::size_t input_len = common_input_len(records);
  ClassSplitHistogram h;
  if (records.empty()) return h;
  if (bucket_size == 0) bucket_size = std::max<std::size_t>(1, input_len / 100);
  h.bucket_size = bucket_size;
  const std::size_t buckets = (input_len + bucket_size - 1) / bucket_size;
  h.keys.resize(buckets);
  for (std::size_t i = 0; i < buckets; ++i) h.keys[i] = i * bucket_size;
  h.malware.assign(buckets, 0);
  h.goodware.assign(buckets, 0);
  for (const ActivationRecord& r : records) {
    (r.label ? h.malware : h.goodware)[r.offset / bucket_size]++;
  }
  return h;
}

ActivationAnnotation annotate_activation(const ActivationRecord& record,
                                         const std::vector<std::uint8_t>& bytes,
                                         const RegionMap& regions,
                                         std::size_t kernel_width, std::size_t context) {
  ActivationAnnotation a;
  if (record.offset >= bytes.size()) {
    // The window starts in the preprocessing pad, not in the file.
    a.region = "Padding(input)";
    a.window_start = record.offset;
    a.window_end = record.offset + kernel_width;
    return a;
  }
  const Region& region = regions.at(record.offset);
  a.region = region_kind_name(region.kind);
  a.detail = region.detail;

  const std::size_t start = record.offset >= context ? record.offset - context : 0;
  const std::size_t want_end = record.offset + kernel_width + context;
  AnnotatedWindow win = annotate_window(bytes, start, want_end - start);
  a.window_start = win.start;
  a.window_end = win.end;
  a.strings = std::move(win.string_view);
  a.instructions = std::move(win.instructions);
  return a;
}

}  // namespace byteprobe
