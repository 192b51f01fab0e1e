#pragma once

#include <cstddef>
#include <vector>

namespace byteprobe {

// Upper regularized incomplete gamma Q(s, x) = Gamma(s,x)/Gamma(s).
double gamma_q(double s, double x);

// Survival function of the chi-square distribution with k dof.
double chi_square_sf(double statistic, std::size_t dof);

// Pearson statistic of observed counts against a uniform expectation and
// the corresponding p-value (dof = buckets-1).
struct ChiSquareTest {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t dof = 0;
};
ChiSquareTest chi_square_uniform(const std::vector<std::size_t>& observed);

}  // namespace byteprobe
