/*
   Copyright 2026 The neis Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "neis/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace neis::special {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 1000;

// sum_{n>=0} x^n / (a (a+1) ... (a+n)); gamma(a, x) = x^a e^{-x} * series.
double gamma_series_sum(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) return sum;
  }
  throw std::runtime_error("gamma series did not converge");
}

// Continued fraction for Q(a, x) * Gamma(a) * e^{x} x^{-a} (modified Lentz).
double gamma_cf(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw std::runtime_error("gamma continued fraction did not converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    return std::exp(a * std::log(x) - x - std::lgamma(a)) * gamma_series_sum(a, x);
  }
  const double q = std::exp(a * std::log(x) - x - std::lgamma(a)) * gamma_cf(a, x);
  return 1.0 - q;
}

double lower_gamma(double a, double x) { return gamma_p(a, x) * std::tgamma(a); }

double scaled_lower_gamma(double a, double u) {
  if (u < 0.0) throw std::domain_error("scaled_lower_gamma: u < 0");
  if (u < a + 1.0) return std::exp(-u) * gamma_series_sum(a, u);
  return std::exp(std::log(gamma_p(a, u)) + std::lgamma(a) - a * std::log(u));
}

double scaled_lower_gamma_derivative(double a, double u) {
  if (u < 0.0) throw std::domain_error("scaled_lower_gamma_derivative: u < 0");
  if (u < 0.5) {
    // d/du sum_n (-u)^n / (n! (a+n))
    double sum = 0.0;
    double power = 1.0;  // (-u)^{n-1} / (n-1)!
    for (int n = 1; n < 60; ++n) {
      const double term = -power / (a + n);
      sum += term;
      if (std::abs(term) < kEps * std::abs(sum)) break;
      power *= -u / n;
    }
    return sum;
  }
  return (std::exp(-u) - a * scaled_lower_gamma(a, u)) / u;
}

}  // namespace neis::special
