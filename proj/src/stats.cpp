#include "byteprobe/stats.hpp"

#include <cmath>
#include <limits>

#include "byteprobe/errors.hpp"

namespace byteprobe {

namespace {

// Lower regularized incomplete gamma by series expansion (x < s+1).
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (s + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Upper regularized incomplete gamma by Lentz continued fraction (x >= s+1).
double gamma_q_cf(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

}  // namespace

double gamma_q(double s, double x) {
  if (s <= 0.0) throw InputError("gamma_q: shape must be positive");
  if (x < 0.0) throw InputError("gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
  return gamma_q_cf(s, x);
}

double chi_square_sf(double statistic, std::size_t dof) {
  if (dof == 0) throw InputError("chi_square_sf: zero degrees of freedom");
  if (statistic <= 0.0) return 1.0;
  return gamma_q(static_cast<double>(dof) / 2.0, statistic / 2.0);
}

ChiSquareTest chi_square_uniform(const std::vector<std::size_t>& observed) {
  if (observed.size() < 2) throw InputError("chi_square_uniform: need >= 2 buckets");
  std::size_t total = 0;
  for (std::size_t c : observed) total += c;
  if (total == 0) throw InputError("chi_square_uniform: empty sample");
  const double expected = static_cast<double>(total) / static_cast<double>(observed.size());
  ChiSquareTest t;
  t.dof = observed.size() - 1;
  for (std::size_t c : observed) {
    const double diff = static_cast<double>(c) - expected;
    t.statistic += diff * diff / expected;
  }
  t.p_value = chi_square_sf(t.statistic, t.dof);
  return t;
}

}  // namespace byteprobe
