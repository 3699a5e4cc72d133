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

#pragma once

#include <cmath>
#include <functional>

#include "neis/targets.hpp"

namespace neis::testing {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of a scalar function along coordinate k.
inline double central_diff(const std::function<double(const Vec&)>& fn, const Vec& x, int k, double eps = 1e-6) {
  Vec xp = x, xm = x;
  xp[k] += eps;
  xm[k] -= eps;
  return (fn(xp) - fn(xm)) / (2.0 * eps);
}

inline Vec central_grad(const std::function<double(const Vec&)>& fn, const Vec& x, double eps = 1e-6) {
  Vec g(x.size());
  for (int k = 0; k < x.size(); ++k) g[k] = central_diff(fn, x, k, eps);
  return g;
}

}  // namespace neis::testing
