#pragma once

#include <vector>

#include "byteprobe/attrib.hpp"
#include "byteprobe/tensor.hpp"

namespace byteprobe::testing {

// Dense midpoint-rule integrated gradients between a single baseline and the
// input: phi_i = (x_i - b_i) * mean_t grad_i(b + (t+0.5)/T * (x - b)).
// Completeness (sum phi = f(x) - f(b)) holds up to quadrature error.
inline std::vector<double> integrated_gradients_oracle(const EmbeddedFn& f,
                                                       const Tensor& input,
                                                       const Tensor& baseline,
                                                       std::size_t steps) {
  const std::size_t size = input.size();
  std::vector<double> acc(size, 0.0);
  std::vector<double> point(size);
  for (std::size_t t = 0; t < steps; ++t) {
    const double alpha = (static_cast<double>(t) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < size; ++i) {
      point[i] = baseline.data()[i] + alpha * (input.data()[i] - baseline.data()[i]);
    }
    Tensor leaf = Tensor::from(input.shape(), point, true);
    backward(f(leaf));
    const std::vector<double>& g = leaf.grad();
    for (std::size_t i = 0; i < size; ++i) acc[i] += g[i];
  }
  std::vector<double> phi(size);
  for (std::size_t i = 0; i < size; ++i) {
    phi[i] = (input.data()[i] - baseline.data()[i]) * acc[i] / static_cast<double>(steps);
  }
  return phi;
}

}  // namespace byteprobe::testing
