#include "byteprobe/attrib.hpp"

#include <algorithm>
#include <cmath>

#include "byteprobe/errors.hpp"
#include "byteprobe/parallel.hpp"

namespace byteprobe {

void AttributionConfig::validate() const {
  if (n_samples < 1) throw InputError("attribution: n_samples must be >= 1");
  if (smoothing_sigma < 0.0) throw InputError("attribution: negative smoothing sigma");
}

namespace {

// Values-only copy of a model with gradients disabled: explanations need
// the gradient of the embedded input, never of the weights, and a frozen
// copy keeps concurrent explanations from sharing mutable flags.
CnnModel freeze(const CnnModel& model) {
  CnnModel copy = model;
  auto clone = [](Parameter& p) {
    p.tensor = Tensor::from(p.tensor.shape(), p.tensor.data(), false);
  };
  clone(copy.embedding);
  for (auto& k : copy.conv_kernels) clone(k);
  for (auto& b : copy.conv_biases) clone(b);
  clone(copy.dense_weights);
  clone(copy.dense_bias);
  return copy;
}

}  // namespace

std::vector<double> expected_gradients(const EmbeddedFn& f, const Tensor& input,
                                       const std::vector<Tensor>& backgrounds,
                                       const AttributionConfig& config) {
  config.validate();
  if (backgrounds.empty()) throw InputError("attribution: empty background set");
  for (const Tensor& b : backgrounds) {
    if (b.shape() != input.shape()) {
      throw InputError("attribution: background shape does not match input");
    }
  }
  const std::size_t size = input.size();
  const Rng root(config.seed);

  // Draws accumulate into a fixed number of chunk-local buffers that are
  // then combined in chunk order, so the result is independent of how many
  // threads actually ran.
  const std::size_t chunk_count = std::min<std::size_t>(8, config.n_samples);
  std::vector<std::vector<double>> partial(chunk_count, std::vector<double>(size, 0.0));
  const std::size_t per_chunk = (config.n_samples + chunk_count - 1) / chunk_count;

  parallel_for(chunk_count, 1, [&](std::size_t cb, std::size_t ce) {
    std::vector<double> point(size);
    for (std::size_t chunk = cb; chunk < ce; ++chunk) {
      const std::size_t lo = chunk * per_chunk;
      const std::size_t hi = std::min<std::size_t>(config.n_samples, lo + per_chunk);
      for (std::size_t draw = lo; draw < hi; ++draw) {
        Rng rng = root.fork("draw", draw);
        const Tensor& bg = backgrounds[rng.below(backgrounds.size())];
        const double alpha = rng.uniform();
        for (std::size_t i = 0; i < size; ++i) {
          point[i] = bg.data()[i] + alpha * (input.data()[i] - bg.data()[i]);
        }
        if (config.smoothing_sigma > 0.0) {
          for (std::size_t i = 0; i < size; ++i) point[i] += config.smoothing_sigma * rng.normal();
        }
        Tensor leaf = Tensor::from(input.shape(), point, /*requires_grad=*/true);
        Tensor out = f(leaf);
        if (out.size() != 1) throw InputError("attribution: model output must be scalar");
        backward(out);
        const std::vector<double>& g = leaf.grad();
        std::vector<double>& acc = partial[chunk];
        for (std::size_t i = 0; i < size; ++i) {
          acc[i] += g[i] * (input.data()[i] - bg.data()[i]);
        }
      }
    }
  });

  std::vector<double> phi(size, 0.0);
  for (const auto& acc : partial) {
    for (std::size_t i = 0; i < size; ++i) phi[i] += acc[i];
  }
  const double inv = 1.0 / static_cast<double>(config.n_samples);
  for (double& v : phi) v *= inv;
  return phi;
}

std::vector<Tensor> embed_backgrounds(const CnnModel& model,
                                      const std::vector<std::vector<int>>& background_symbols) {
  CnnModel frozen = freeze(model);
  std::vector<Tensor> out(background_symbols.size());
  parallel_for(background_symbols.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = embed(frozen, background_symbols[i]);
  });
  return out;
}

ByteAttribution gradient_shap(const CnnModel& model, const std::vector<int>& symbols,
                              const std::vector<Tensor>& embedded_backgrounds,
                              const AttributionConfig& config) {
  const CnnModel frozen = freeze(model);
  const Tensor x = embed(frozen, symbols);
  const EmbeddedFn f = [&frozen](const Tensor& e) {
    return forward_from_embedded(frozen, e, false);
  };
  const std::vector<double> element_phi = expected_gradients(f, x, embedded_backgrounds, config);

  const std::size_t len = frozen.config.input_len;
  const std::size_t dims = frozen.config.embed_dim;
  ByteAttribution attr;
  attr.phi.assign(len, 0.0);
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t j = 0; j < len; ++j) attr.phi[j] += element_phi[d * len + j];
  }
  attr.model_output = forward_from_embedded(frozen, x, false).item();
  double bg_total = 0.0;
  for (const Tensor& b : embedded_backgrounds) {
    bg_total += forward_from_embedded(frozen, b, false).item();
  }
  attr.expected_background = bg_total / static_cast<double>(embedded_backgrounds.size());
  return attr;
}

ByteAttribution gradient_shap(const CnnModel& model, const std::vector<int>& symbols,
                              const std::vector<std::vector<int>>& background_symbols,
                              const AttributionConfig& config) {
  return gradient_shap(model, symbols, embed_backgrounds(model, background_symbols), config);
}

std::vector<Segment> segment(const std::vector<double>& phi) {
  std::vector<Segment> out;
  Segment cur;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    const double v = phi[j];
    const int s = v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
    if (cur.sign == 0) {
      if (s == 0) continue;  // leading zeros carry no attribution
      cur = {j, j + 1, v, s};
    } else if (s == 0 || s == cur.sign) {
      cur.end = j + 1;  // zeros absorb into the running segment
      cur.value += v;
    } else {
      out.push_back(cur);
      cur = {j, j + 1, v, s};
    }
  }
  if (cur.sign != 0) out.push_back(cur);
  return out;
}

std::vector<Segment> segment(const ByteAttribution& attribution) {
  return segment(attribution.phi);
}

std::size_t security_dir_entry_offset(const PeImage& pe) {
  return pe.optional_header_offset + (pe.pe32_plus ? 112 : 96) + 8 * kDirSecurity;
}

namespace {

bool overlaps(std::size_t a1, std::size_t a2, std::size_t b1, std::size_t b2) {
  return a1 < b2 && b1 < a2;
}

std::string named_feature(const Segment& seg, const PeImage& pe) {
  if (pe.checksum_offset && overlaps(seg.start, seg.end, pe.checksum_offset, pe.checksum_offset + 4)) {
    return "checksum";
  }
  const std::size_t sec_entry = security_dir_entry_offset(pe);
  if (overlaps(seg.start, seg.end, sec_entry, sec_entry + 8)) {
    return "security directory";
  }
  if (pe.rich && overlaps(seg.start, seg.end, pe.rich->start, pe.rich->end)) {
    return "Rich header";
  }
  for (const ImportedDll& dll : pe.imports) {
    if (overlaps(seg.start, seg.end, dll.name_offset, dll.name_end)) return dll.dll_name;
    for (const ImportedFunction& fn : dll.functions) {
      if (overlaps(seg.start, seg.end, fn.name_offset, fn.name_end)) return fn.name;
    }
  }
  return {};
}

}  // namespace

std::vector<AnnotatedSegment> top_segments(const std::vector<Segment>& segments,
                                           const PeImage& pe, const RegionMap& regions,
                                           const std::vector<std::uint8_t>& bytes,
                                           std::size_t n, bool include_padding) {
  std::vector<const Segment*> pos, neg;
  for (const Segment& s : segments) {
    const bool in_padding = s.start >= bytes.size();
    if (in_padding && !include_padding) continue;
    (s.sign > 0 ? pos : neg).push_back(&s);
  }
  auto by_magnitude = [](const Segment* a, const Segment* b) {
    if (std::abs(a->value) != std::abs(b->value)) return std::abs(a->value) > std::abs(b->value);
    return a->start < b->start;
  };
  std::sort(pos.begin(), pos.end(), by_magnitude);
  std::sort(neg.begin(), neg.end(), by_magnitude);
  if (pos.size() > n) pos.resize(n);
  if (neg.size() > n) neg.resize(n);

  std::vector<AnnotatedSegment> out;
  auto annotate = [&](const Segment* s) {
    AnnotatedSegment a;
    a.seg = *s;
    if (s->start >= bytes.size()) {
      a.region = "Padding(input)";
      out.push_back(std::move(a));
      return;
    }
    const Region& r = regions.at(s->start);
    a.region = region_kind_name(r.kind);
    a.detail = r.detail;
    a.feature = named_feature(*s, pe);
    const std::size_t span = std::min<std::size_t>(s->end, bytes.size()) - s->start;
    AnnotatedWindow win = annotate_window(bytes, s->start, std::min<std::size_t>(span, 64));
    a.strings = std::move(win.string_view);
    a.instructions = std::move(win.instructions);
    out.push_back(std::move(a));
  };
  for (const Segment* s : pos) annotate(s);
  for (const Segment* s : neg) annotate(s);
  return out;
}

}  // namespace byteprobe
