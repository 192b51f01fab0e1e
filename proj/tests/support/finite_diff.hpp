#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "byteprobe/tensor.hpp"

namespace byteprobe::testing {

// Central-difference gradient of eval() with respect to t's data.  eval must
// rebuild its forward pass from the current parameter values on every call.
inline std::vector<double> finite_diff(Tensor& t, const std::function<double()>& eval,
                                       double eps = 1e-5) {
  std::vector<double> grad(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double saved = t.data()[i];
    t.data()[i] = saved + eps;
    const double hi = eval();
    t.data()[i] = saved - eps;
    const double lo = eval();
    t.data()[i] = saved;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace byteprobe::testing
