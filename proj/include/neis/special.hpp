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

namespace neis::special {

// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
// Series for x < a + 1, modified Lentz continued fraction otherwise.
double gamma_p(double a, double x);

// Lower incomplete gamma gamma(a, x) (not regularized).
double lower_gamma(double a, double x);

// G(u) = gamma(a, u) / u^a, extended continuously to G(0) = 1 / a.
double scaled_lower_gamma(double a, double u);

// dG/du, with dG/du(0) = -1 / (a + 1).
double scaled_lower_gamma_derivative(double a, double u);

}  // namespace neis::special
