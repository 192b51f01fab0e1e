#include <doctest.h>

#include <cmath>

#include "byteprobe/errors.hpp"
#include "byteprobe/rng.hpp"
#include "byteprobe/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace byteprobe;
using byteprobe::testing::finite_diff;
using byteprobe::testing::max_rel_error;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), grad);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Triple-loop convolution oracle, no reuse of the production kernels.
std::vector<double> conv_oracle(const std::vector<double>& x, std::size_t c_in, std::size_t len,
                                const std::vector<double>& k, std::size_t c_out, std::size_t w,
                                const std::vector<double>& bias, std::size_t stride) {
  const std::size_t l_out = (len - w) / stride + 1;
  std::vector<double> y(c_out * l_out, 0.0);
  for (std::size_t f = 0; f < c_out; ++f) {
    for (std::size_t p = 0; p < l_out; ++p) {
      double acc = bias[f];
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t i = 0; i < w; ++i) {
          acc += x[c * len + p * stride + i] * k[(f * c_in + c) * w + i];
        }
      }
      y[f * l_out + p] = acc;
    }
  }
  return y;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("conv1d geometry: 100KB input, width 11, stride 1 gives 102390 positions") {
  Tensor input = Tensor::zeros({1, 102400});
  Tensor kernels = Tensor::zeros({1, 1, 11});
  Tensor bias = Tensor::zeros({1});
  Tensor out = conv1d(input, kernels, bias, 1);
  CHECK(out.dim(0) == 1);
  CHECK(out.dim(1) == 102390);
}

TEST_CASE("conv1d with L == w and zero weights is a single zero output") {
  Tensor input = Tensor::from({1, 4}, {1, 2, 3, 4});
  Tensor kernels = Tensor::zeros({2, 1, 4});
  Tensor bias = Tensor::zeros({2});
  Tensor out = conv1d(input, kernels, bias, 1);
  CHECK(out.shape() == std::vector<std::size_t>{2, 1});
  CHECK(out.data()[0] == 0.0);
  CHECK(out.data()[1] == 0.0);
}

TEST_CASE("conv1d hand example [1,2,3,4] * [1,0,-1] -> [-2,-2]") {
  Tensor input = Tensor::from({1, 4}, {1, 2, 3, 4});
  Tensor kernels = Tensor::from({1, 1, 3}, {1, 0, -1});
  Tensor bias = Tensor::zeros({1});
  Tensor out = conv1d(input, kernels, bias, 1);
  CHECK(out.data() == std::vector<double>{-2, -2});
}

TEST_CASE("conv1d matches the brute-force oracle on random shapes") {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c_in = 1 + rng.below(4);
    const std::size_t c_out = 1 + rng.below(5);
    const std::size_t w = 1 + rng.below(6);
    const std::size_t len = w + rng.below(20);
    const std::size_t stride = 1 + rng.below(3);
    Tensor x = random_tensor({c_in, len}, rng, false);
    Tensor k = random_tensor({c_out, c_in, w}, rng, false);
    Tensor b = random_tensor({c_out}, rng, false);
    Tensor y = conv1d(x, k, b, stride);
    const auto expect = conv_oracle(x.data(), c_in, len, k.data(), c_out, w, b.data(), stride);
    REQUIRE(y.data().size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d output length satisfies the formula for random (L,w,stride)") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t w = 1 + rng.below(8);
    const std::size_t len = w + rng.below(64);
    const std::size_t stride = 1 + rng.below(5);
    Tensor out = conv1d(Tensor::zeros({1, len}), Tensor::zeros({1, 1, w}), Tensor::zeros({1}),
                        stride);
    CHECK(out.dim(1) == (len - w) / stride + 1);
  }
}

TEST_CASE("conv1d reports offending axes") {
  CHECK_THROWS_AS(conv1d(Tensor::zeros({2, 8}), Tensor::zeros({1, 3, 3}), Tensor::zeros({1}), 1),
                  DimensionError);
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 2}), Tensor::zeros({1, 1, 3}), Tensor::zeros({1}), 1),
                  DimensionError);
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 8}), Tensor::zeros({2, 1, 3}), Tensor::zeros({1}), 1),
                  DimensionError);
}

TEST_CASE("maxpool1d examples") {
  SUBCASE("window max and argmax") {
    auto [out, argmax] = maxpool1d(Tensor::from({1, 4}, {1, 5, 2, 0}), 2, 2);
    CHECK(out.data() == std::vector<double>{5, 2});
    CHECK(argmax == std::vector<std::size_t>{1, 2});
  }
  SUBCASE("ties break to the first index of the window") {
    auto [out, argmax] = maxpool1d(Tensor::from({1, 6}, {3, 3, 3, 3, 3, 3}), 3, 3);
    CHECK(out.data() == std::vector<double>{3, 3});
    CHECK(argmax == std::vector<std::size_t>{0, 3});
  }
  SUBCASE("width == stride == 1 is the identity") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto [out, argmax] = maxpool1d(x, 1, 1);
    CHECK(out.data() == x.data());
  }
  SUBCASE("width > L is a dimension error") {
    CHECK_THROWS_AS(maxpool1d(Tensor::zeros({1, 3}), 4, 1), DimensionError);
  }
}

TEST_CASE("embedding lookup examples") {
  SUBCASE("repeated symbol repeats the row") {
    Tensor table = Tensor::from({3, 2}, {10, 11, 20, 21, 30, 31});
    Tensor out = embedding_lookup({0, 0}, table);
    CHECK(out.shape() == std::vector<std::size_t>{2, 2});
    CHECK(out.data() == std::vector<double>{10, 10, 11, 11});
  }
  SUBCASE("257 x 10 table produces [10 x L]") {
    Tensor table = Tensor::zeros({257, 10});
    Tensor out = embedding_lookup({0, 256, 100}, table);
    CHECK(out.shape() == std::vector<std::size_t>{10, 3});
  }
  SUBCASE("out-of-range symbol names the offending offset") {
    Tensor table = Tensor::zeros({257, 10});
    CHECK_THROWS_WITH_AS(embedding_lookup({0, 300}, table),
                         doctest::Contains("offset 1"), InputError);
  }
  SUBCASE("gradient of sum is the per-row occurrence count") {
    Rng rng(9);
    Tensor table = random_tensor({5, 3}, rng);
    const std::vector<int> symbols{1, 3, 1, 1, 0};
    backward(sum(embedding_lookup(symbols, table)));
    const std::vector<double> expect_counts{1, 3, 0, 1, 0};
    for (std::size_t row = 0; row < 5; ++row) {
      for (std::size_t dim = 0; dim < 3; ++dim) {
        CHECK(table.grad()[row * 3 + dim] == expect_counts[row]);
      }
    }
    // Same thing through the central-difference oracle.
    table.zero_grad();
    Tensor table2 = Tensor::from({5, 3}, table.data(), true);
    auto eval = [&] { return sum(embedding_lookup(symbols, table2)).item(); };
    const auto numeric = finite_diff(table2, eval);
    for (std::size_t row = 0; row < 5; ++row) {
      for (std::size_t dim = 0; dim < 3; ++dim) {
        CHECK(numeric[row * 3 + dim] == doctest::Approx(expect_counts[row]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("dense, sigmoid, relu basics") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  SUBCASE("identity weights pass the input through") {
    Tensor x = Tensor::from({3}, {1.5, -2.0, 0.25});
    Tensor w = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = dense(x, w, Tensor::zeros({3}));
    CHECK(out.data() == x.data());
  }
  SUBCASE("relu clamps negatives") {
    Tensor out = relu(Tensor::from({4}, {-1, 0, 2, -0.5}));
    CHECK(out.data() == std::vector<double>{0, 0, 2, 0});
  }
  SUBCASE("random 3x4 dense gradient matches finite differences to 1e-6") {
    Rng rng(31);
    Tensor x = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);
    backward(sum(sigmoid(dense(x, w, b))));
    for (Tensor* t : {&x, &w, &b}) {
      Tensor copy = Tensor::from(t->shape(), t->data(), true);
      Tensor *xx = &x == t ? &copy : &x, *ww = &w == t ? &copy : &w, *bb = &b == t ? &copy : &b;
      auto eval = [&] { return sum(sigmoid(dense(*xx, *ww, *bb))).item(); };
      CHECK(max_rel_error(t->grad(), finite_diff(copy, eval)) < 1e-6);
    }
  }
}

TEST_CASE("dropout") {
  Rng rng(4);
  Tensor x = random_tensor({100}, rng, false);
  SUBCASE("rate 0 is the identity in both modes") {
    Rng r1(1);
    CHECK(dropout(x, 0.0, true, r1).data() == x.data());
    CHECK(dropout(x, 0.0, false, r1).data() == x.data());
  }
  SUBCASE("inference is exactly the identity regardless of rate") {
    Rng r1(1);
    Tensor out = dropout(x, 0.5, false, r1);
    CHECK(out.node().get() == x.node().get());
  }
  SUBCASE("empirical zero fraction approaches the rate") {
    Tensor big = Tensor::zeros({100000});
    for (double& v : big.data()) v = 1.0;
    Rng r2(99);
    Tensor out = dropout(big, 0.5, true, r2);
    std::size_t zeros = 0;
    for (double v : out.data()) {
      if (v == 0.0) ++zeros;
      else CHECK(v == 2.0);  // inverted scaling 1/(1-rate)
    }
    const double frac = static_cast<double>(zeros) / 100000.0;
    CHECK(std::abs(frac - 0.5) < 0.01);
  }
  SUBCASE("rate outside [0,1) is an input error") {
    Rng r(0);
    CHECK_THROWS_AS(dropout(x, 1.0, true, r), InputError);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("constant loss leaves zero gradients") {
    Rng rng(6);
    Tensor w = random_tensor({7}, rng);
    backward(scale(sum(w), 0.0));
    for (double g : w.grad()) CHECK(g == 0.0);
  }
  SUBCASE("grad before backward is a state error") {
    Tensor w = Tensor::zeros({2}, true);
    CHECK_THROWS_AS((void)w.grad(), StateError);
  }
  SUBCASE("backward on a non-scalar is rejected") {
    Tensor w = Tensor::zeros({2}, true);
    CHECK_THROWS_AS(backward(w), DimensionError);
  }
  SUBCASE("maxpool routes gradient only to argmax positions") {
    Tensor x = Tensor::from({1, 4}, {1.0, 5.0, 2.0, 0.0}, true);
    auto pooled = maxpool1d(x, 2, 2);
    backward(sum(pooled.output));
    CHECK(x.grad() == std::vector<double>{0, 1, 1, 0});
    // Perturbing a non-argmax element below the gap leaves the loss unchanged.
    const double before = sum(maxpool1d(x, 2, 2).output).item();
    x.data()[0] += 0.5;
    const double after = sum(maxpool1d(x, 2, 2).output).item();
    CHECK(before == after);
  }
}

TEST_CASE("two-block model gradient matches finite differences within 1e-4") {
  Rng rng(2024);
  const std::size_t len = 20;
  Tensor table = random_tensor({8, 4}, rng);
  Tensor k1 = random_tensor({3, 4, 3}, rng);
  Tensor b1 = random_tensor({3}, rng);
  Tensor k2 = random_tensor({2, 3, 3}, rng);
  Tensor b2 = random_tensor({2}, rng);
  Tensor w = random_tensor({1, 2}, rng);
  Tensor b = random_tensor({1}, rng);
  std::vector<int> symbols;
  for (std::size_t i = 0; i < len; ++i) symbols.push_back(static_cast<int>(rng.below(8)));

  auto forward = [&]() {
    Tensor x = embedding_lookup(symbols, table);
    x = maxpool1d(relu(conv1d(x, k1, b1, 1)), 2, 2).output;
    x = maxpool1d(relu(conv1d(x, k2, b2, 1)), 2, 2).output;
    x = maxpool1d(x, x.dim(1), x.dim(1)).output;
    x = reshape(x, {x.dim(0)});
    return bce_with_logits(dense(x, w, b), 1.0);
  };
  backward(forward());
  for (Tensor* t : {&table, &k1, &b1, &k2, &b2, &w, &b}) {
    auto eval = [&] { return forward().item(); };
    CHECK(max_rel_error(t->grad(), finite_diff(*t, eval)) < 1e-4);
  }
}

TEST_CASE("gradient checks across ops on random small tensors") {
  Rng rng(555);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({6}, rng);
    Tensor b = random_tensor({6}, rng);
    auto forward = [&] { return sum(mul(sigmoid(a), add(relu(b), scale(a, 0.3)))); };
    backward(forward());
    for (Tensor* t : {&a, &b}) {
      auto eval = [&] { return forward().item(); };
      CHECK(max_rel_error(t->grad(), finite_diff(*t, eval)) < 1e-4);
    }
  }
}

TEST_CASE("bce_with_logits agrees with the naive formula and its gradient") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const double z = rng.uniform(-6.0, 6.0);
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tensor zt = Tensor::scalar(z, true);
    Tensor loss = bce_with_logits(zt, y);
    const double p = 1.0 / (1.0 + std::exp(-z));
    CHECK(loss.item() == doctest::Approx(-(y * std::log(p) + (1 - y) * std::log(1 - p)))
                             .epsilon(1e-9));
    backward(loss);
    CHECK(zt.grad()[0] == doctest::Approx(p - y).epsilon(1e-9));
  }
}

}  // TEST_SUITE
