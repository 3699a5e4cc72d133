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

#include <vector>

#include "neis/flows.hpp"
#include "neis/targets.hpp"

namespace neis {

struct GradSample {
  double a_value = 0.0;
  Vec a_grad;
  bool ok = true;
};

// (A, dA/dtheta) by the estimator's quadrature stencils over RK4 sensitivities.
GradSample grad_pointwise_integration(const TargetPair& tp, const FlowField& f, VecRef x,
                                      double t_minus, int n_steps);

// (A, dA/dtheta) for t_- = 0 from the coupled ODE systems.
GradSample grad_pointwise_ode(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps);

enum class GradScheme { kIntegration, kOde };

struct BatchLoss {
  double loss = 0.0;
  Vec grad;
  double mean_a = 0.0;
  double variance = 0.0;  // sample variance of A, divide by n - 1
  std::size_t excluded = 0;
};

// Batch second moment mean(A^2) with gradient 2 mean(A dA), or, when
// `centered`, mean((A - Abar)^2) with gradient 2 mean((A - Abar) dA) where the
// batch mean Abar is held fixed. Samples with failed evaluations are dropped.
BatchLoss grad_batch(const TargetPair& tp, const FlowField& f, const std::vector<Vec>& samples,
                     double t_minus, int n_steps, bool centered,
                     GradScheme scheme = GradScheme::kIntegration);

}  // namespace neis
