#include <doctest.h>

#include <cmath>
#include <numeric>

#include "byteprobe/attrib.hpp"
#include "byteprobe/corpus.hpp"
#include "byteprobe/errors.hpp"
#include "support/ig_oracle.hpp"
#include "support/toy.hpp"

using namespace byteprobe;
using byteprobe::testing::integrated_gradients_oracle;
using byteprobe::testing::tiny_config;
using byteprobe::testing::toy_corpus;
using byteprobe::testing::trained_toy_model;

namespace {

double total(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST_SUITE("attrib") {

TEST_CASE("constant function attributes nothing") {
  const EmbeddedFn f = [](const Tensor& e) { return scale(sum(e), 0.0); };
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::zeros({2, 3});
  AttributionConfig cfg;
  cfg.n_samples = 16;
  const auto phi = expected_gradients(f, x, {b}, cfg);
  for (double v : phi) CHECK(v == 0.0);
}

TEST_CASE("linear function with one baseline matches the closed form exactly") {
  Rng rng(14);
  Tensor w = Tensor::from({3, 4}, std::vector<double>(12));
  for (double& v : w.data()) v = rng.uniform(-1, 1);
  const EmbeddedFn f = [&w](const Tensor& e) { return sum(mul(w, e)); };
  Tensor x = Tensor::from({3, 4}, std::vector<double>(12));
  Tensor b = Tensor::from({3, 4}, std::vector<double>(12));
  for (double& v : x.data()) v = rng.uniform(-2, 2);
  for (double& v : b.data()) v = rng.uniform(-2, 2);

  for (std::size_t n : {std::size_t{1}, std::size_t{2}}) {
    AttributionConfig cfg;
    cfg.n_samples = n;
    cfg.seed = n;
    const auto phi = expected_gradients(f, x, {b}, cfg);
    for (std::size_t i = 0; i < phi.size(); ++i) {
      CHECK(phi[i] == w.data()[i] * (x.data()[i] - b.data()[i]));  // exact
    }
  }
  // Larger draw counts agree too; alpha never enters a constant gradient.
  AttributionConfig cfg;
  cfg.n_samples = 100;
  cfg.seed = 9;
  const auto phi = expected_gradients(f, x, {b}, cfg);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    CHECK(phi[i] == doctest::Approx(w.data()[i] * (x.data()[i] - b.data()[i])).epsilon(1e-12));
  }
}

TEST_CASE("completeness on a trained toy model within 2% of the IG oracle") {
  const CnnModel model = trained_toy_model();
  const auto corpus = toy_corpus(6, 99);
  const std::vector<int> x_syms = preprocess(corpus[0].bytes, model.config.input_len);  // label 1
  const std::vector<int> b_syms = preprocess(corpus[1].bytes, model.config.input_len);  // label 0

  const auto backgrounds = embed_backgrounds(model, {b_syms});
  AttributionConfig cfg;
  cfg.n_samples = 10000;
  cfg.seed = 4;
  const ByteAttribution attr = gradient_shap(model, x_syms, backgrounds, cfg);

  const double fx = attr.model_output;
  const double fb = attr.expected_background;
  const double gap = fx - fb;
  REQUIRE(std::abs(gap) > 0.2);  // the toy model separates the two classes

  CHECK(std::abs(total(attr.phi) - gap) < 0.02 * std::abs(gap));

  // The dense Riemann-sum oracle integrates to the same quantity.
  const EmbeddedFn f = [&model](const Tensor& e) { return forward_from_embedded(model, e, false); };
  Tensor x_emb = embed(model, x_syms);
  const auto phi_ig = integrated_gradients_oracle(f, x_emb, backgrounds[0], 512);
  CHECK(std::abs(total(phi_ig) - gap) < 0.02 * std::abs(gap));
  CHECK(std::abs(total(attr.phi) - total(phi_ig)) < 0.02 * std::abs(gap));
}

TEST_CASE("zero dense weights give identically zero attributions") {
  CnnModel m = build_model(tiny_config(), 8);
  for (double& v : m.dense_weights.tensor.data()) v = 0.0;
  for (double& v : m.dense_bias.tensor.data()) v = 0.0;
  const auto corpus = toy_corpus(3, 5);
  const auto syms = preprocess(corpus[0].bytes, m.config.input_len);
  const auto bg = preprocess(corpus[1].bytes, m.config.input_len);
  AttributionConfig cfg;
  cfg.n_samples = 8;
  const ByteAttribution attr = gradient_shap(m, syms, {{bg}}, cfg);
  for (double v : attr.phi) CHECK(v == 0.0);
}

TEST_CASE("attribution is deterministic for a fixed seed") {
  const CnnModel model = trained_toy_model(31);
  const auto corpus = toy_corpus(4, 17);
  const auto syms = preprocess(corpus[0].bytes, model.config.input_len);
  std::vector<std::vector<int>> bg{preprocess(corpus[1].bytes, model.config.input_len),
                                   preprocess(corpus[3].bytes, model.config.input_len)};
  AttributionConfig cfg;
  cfg.n_samples = 64;
  cfg.seed = 123;
  const ByteAttribution a = gradient_shap(model, syms, bg, cfg);
  const ByteAttribution b = gradient_shap(model, syms, bg, cfg);
  CHECK(a.phi == b.phi);
}

TEST_CASE("Monte Carlo variance shrinks like 1/n") {
  const CnnModel model = trained_toy_model(77);
  const auto corpus = toy_corpus(6, 7);
  const auto syms = preprocess(corpus[0].bytes, model.config.input_len);
  const auto backgrounds = embed_backgrounds(
      model, {preprocess(corpus[1].bytes, model.config.input_len),
              preprocess(corpus[3].bytes, model.config.input_len),
              preprocess(corpus[5].bytes, model.config.input_len)});

  auto variance_at = [&](std::size_t n) {
    std::vector<double> totals;
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
      AttributionConfig cfg;
      cfg.n_samples = n;
      cfg.seed = seed;
      totals.push_back(total(gradient_shap(model, syms, backgrounds, cfg).phi));
    }
    double mean = total(totals) / static_cast<double>(totals.size());
    double var = 0.0;
    for (double t : totals) var += (t - mean) * (t - mean);
    return var / static_cast<double>(totals.size());
  };
  const double v100 = variance_at(100);
  const double v400 = variance_at(400);
  const double v1600 = variance_at(1600);
  CHECK(v400 < v100);
  CHECK(v1600 < v400);
  CHECK(v100 / v1600 > 4.0);  // ideal 16x, generous margin
}

TEST_CASE("segmentation") {
  SUBCASE("sign runs with their sums") {
    const auto segs = segment(std::vector<double>{1, 2, -1, -1, 3});
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].start == 0);
    CHECK(segs[0].end == 2);
    CHECK(segs[0].value == 3.0);
    CHECK(segs[0].sign == 1);
    CHECK(segs[1].start == 2);
    CHECK(segs[1].end == 4);
    CHECK(segs[1].value == -2.0);
    CHECK(segs[2].start == 4);
    CHECK(segs[2].end == 5);
    CHECK(segs[2].value == 3.0);
  }
  SUBCASE("all positive collapses to one segment over the support") {
    const auto segs = segment(std::vector<double>{0.5, 1.0, 0.25});
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start == 0);
    CHECK(segs[0].end == 3);
    CHECK(segs[0].value == 1.75);
  }
  SUBCASE("leading zeros are dropped, inner zeros absorb") {
    const auto segs = segment(std::vector<double>{0, 0, 1, 0, -1});
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].start == 2);
    CHECK(segs[0].end == 4);  // absorbed the zero at 3
    CHECK(segs[1].start == 4);
  }
  SUBCASE("all-zero attribution has no segments") {
    CHECK(segment(std::vector<double>{0, 0, 0}).empty());
  }
  SUBCASE("segment sums conserve the per-byte total exactly") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> phi(1 + rng.below(200));
      for (double& v : phi) {
        const double r = rng.uniform();
        v = r < 0.25 ? 0.0 : rng.uniform(-1, 1);
      }
      const auto segs = segment(phi);
      double seg_total = 0.0;
      for (const auto& s : segs) seg_total += s.value;
      CHECK(seg_total == doctest::Approx(total(phi)).epsilon(1e-12));
      for (std::size_t i = 1; i < segs.size(); ++i) {
        CHECK(segs[i].sign != segs[i - 1].sign);  // adjacent segments alternate
      }
    }
  }
}

TEST_CASE("top segments carry PE semantics") {
  CorpusSpec spec;
  spec.count = 8;
  spec.seed = 77;
  spec.malware_ratio = 0.5;
  spec.p_rich_malware = 1.0;
  spec.p_rich_goodware = 1.0;
  spec.p_zero_checksum_malware = 1.0;
  spec.p_zero_checksum_goodware = 1.0;
  spec.imports = {{"advapi32.dll", "CryptEncrypt", 1.0, 1.0}};
  const GeneratedCorpus corpus = generate_corpus(spec);
  const auto& bytes = corpus.samples[0].bytes;
  PeImage pe = parse_pe(bytes);
  RegionMap map = RegionMap::build(pe);
  REQUIRE(pe.rich.has_value());

  std::vector<Segment> segs;
  segs.push_back({pe.rich->start + 4, pe.rich->start + 12, -2.0, -1});     // inside Rich
  segs.push_back({pe.checksum_offset, pe.checksum_offset + 4, 5.0, 1});    // checksum field
  const auto& fn = pe.imports[0].functions[0];
  segs.push_back({fn.name_offset, fn.name_end, 3.0, 1});                   // import name
  segs.push_back({bytes.size() + 100, bytes.size() + 140, 1.0, 1});        // padding tail

  SUBCASE("padding excluded by default") {
    const auto top = top_segments(segs, pe, map, bytes, 5);
    REQUIRE(top.size() == 3);
    CHECK(top[0].feature == "checksum");
    CHECK(top[1].feature == "CryptEncrypt");
    CHECK(top[1].strings.find("CryptEncrypt") != std::string::npos);
    CHECK(top[2].feature == "Rich header");
    CHECK(top[2].region == "RichHeader");
  }
  SUBCASE("padding annotated when included") {
    const auto top = top_segments(segs, pe, map, bytes, 5, true);
    REQUIRE(top.size() == 4);
    bool saw_padding = false;
    for (const auto& t : top) saw_padding = saw_padding || t.region == "Padding(input)";
    CHECK(saw_padding);
  }
  SUBCASE("n limits each sign independently") {
    const auto top = top_segments(segs, pe, map, bytes, 1);
    REQUIRE(top.size() == 2);  // one positive, one negative
    CHECK(top[0].seg.sign == 1);
    CHECK(top[1].seg.sign == -1);
  }
}

TEST_CASE("attribution input validation") {
  AttributionConfig bad;
  bad.n_samples = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad.n_samples = 1;
  bad.smoothing_sigma = -1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);

  const EmbeddedFn f = [](const Tensor& e) { return sum(e); };
  Tensor x = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(expected_gradients(f, x, {}, AttributionConfig{}), InputError);
  CHECK_THROWS_AS(expected_gradients(f, x, {Tensor::zeros({2, 3})}, AttributionConfig{}),
                  InputError);
}

}  // TEST_SUITE
