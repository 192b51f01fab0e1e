#include <doctest.h>

#include "byteprobe/corpus.hpp"
#include "byteprobe/errors.hpp"
#include "byteprobe/probe.hpp"
#include "support/toy.hpp"

using namespace byteprobe;
using byteprobe::testing::tiny_config;

namespace {

LabeledSample random_sample(std::size_t len, std::uint64_t seed, int label = 1) {
  Rng rng(seed);
  LabeledSample s;
  s.id = "probe-" + std::to_string(seed);
  s.label = label;
  s.bytes.resize(len);
  for (auto& b : s.bytes) b = rng.next_byte();
  return s;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("k greater than filters x positions returns every activation") {
  CnnModel m = build_model(tiny_config(96), 3);
  LabeledSample s = random_sample(32, 1);
  const std::size_t positions = 96 - 3 + 1;
  const auto records = top_k_activations(m, s, 100000);
  CHECK(records.size() == m.config.layers[0].filters * positions);
}

TEST_CASE("zero-weight first layer: all zero activations, deterministic tie order") {
  CnnModel m = build_model(tiny_config(96), 3);
  for (double& v : m.conv_kernels[0].tensor.data()) v = 0.0;
  for (double& v : m.conv_biases[0].tensor.data()) v = 0.0;
  const auto records = top_k_activations(m, random_sample(32, 2), 10);
  REQUIRE(records.size() == 10);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].value == 0.0);
    // Ties break to (lower filter, lower offset): flat index order.
    CHECK(records[i].filter == 0);
    CHECK(records[i].offset == i);
  }
}

TEST_CASE("records are sorted descending and reruns are identical") {
  CnnModel m = build_model(tiny_config(96), 9);
  LabeledSample s = random_sample(64, 5);
  const auto a = top_k_activations(m, s, 25);
  const auto b = top_k_activations(m, s, 25);
  REQUIRE(a.size() == 25);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) CHECK(a[i - 1].value >= a[i].value);
    CHECK(a[i].value >= 0.0);  // post-ReLU
    CHECK(a[i].filter == b[i].filter);
    CHECK(a[i].offset == b[i].offset);
    CHECK(a[i].value == b[i].value);
  }
}

TEST_CASE("every offset is a valid first-layer window start") {
  CnnModel m = build_model(tiny_config(96), 10);
  const auto records = top_k_activations(m, random_sample(40, 6), 200);
  const std::size_t w = m.config.layers[0].kernel_width;
  for (const auto& r : records) {
    CHECK(r.offset + w <= m.config.input_len);
    CHECK(r.input_len == m.config.input_len);
  }
}

TEST_CASE("histograms") {
  ActivationRecord mal{"a", 1, 3, 100, 1.0, 4096};
  ActivationRecord good{"b", 0, 3, 100, 0.5, 4096};
  SUBCASE("single record lands in one bucket") {
    ClassSplitHistogram h = aggregate_by_filter({mal}, 8);
    CHECK(h.total() == 1);
    CHECK(h.malware[3] == 1);
    CHECK(h.goodware[3] == 0);
  }
  SUBCASE("counts are conserved and split by class") {
    std::vector<ActivationRecord> records;
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      ActivationRecord r = i % 2 ? mal : good;
      r.filter = rng.below(8);
      r.offset = rng.below(4086);
      records.push_back(r);
    }
    ClassSplitHistogram fh = aggregate_by_filter(records, 8);
    CHECK(fh.total() == records.size());
    ClassSplitHistogram oh = aggregate_by_offset(records, 0);
    CHECK(oh.total() == records.size());
    CHECK(oh.bucket_size == 4096 / 100);
    std::size_t mal_total = 0;
    for (std::size_t c : oh.malware) mal_total += c;
    CHECK(mal_total == 250);
  }
  SUBCASE("mixed input lengths are an input error") {
    ActivationRecord other = mal;
    other.input_len = 1024;
    CHECK_THROWS_AS(aggregate_by_offset({mal, other}, 0), InputError);
  }
}

TEST_CASE("annotating activations against a parsed PE") {
  CorpusSpec spec;
  spec.count = 4;
  spec.seed = 1234;
  spec.imports = {{"advapi32.dll", "CryptEncrypt", 1.0, 1.0}};
  spec.p_rich_malware = 1.0;
  spec.p_rich_goodware = 1.0;
  const GeneratedCorpus corpus = generate_corpus(spec);
  const auto& bytes = corpus.samples[0].bytes;
  PeImage pe = parse_pe(bytes);
  RegionMap map = RegionMap::build(pe);

  SUBCASE("offset 0 is the DOS header") {
    ActivationRecord r{"s", 1, 0, 0, 1.0, 4096};
    const auto a = annotate_activation(r, bytes, map);
    CHECK(a.region == "DosHeader");
  }
  SUBCASE("activation over import name bytes shows the API name") {
    REQUIRE(!pe.imports.empty());
    REQUIRE(!pe.imports[0].functions.empty());
    const auto& fn = pe.imports[0].functions[0];
    ActivationRecord r{"s", 1, 0, fn.name_offset, 1.0, 4096};
    const auto a = annotate_activation(r, bytes, map);
    CHECK(a.region == "ImportNameTable");
    CHECK(a.strings.find("CryptEncrypt") != std::string::npos);
  }
  SUBCASE("activation past the end of the file is input padding") {
    ActivationRecord r{"s", 1, 0, bytes.size() + 10, 0.0, 1 << 20};
    const auto a = annotate_activation(r, bytes, map);
    CHECK(a.region == "Padding(input)");
    CHECK(a.instructions.empty());
  }
}

}  // TEST_SUITE
