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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neis/dynamics.hpp"
#include "neis/flows.hpp"
#include "neis/targets.hpp"

namespace neis {

// Value of a pointwise estimator. ok is false for a degenerate denominator or
// a truncated flowline; such samples are excluded from batch statistics.
struct PointValue {
  double value = 0.0;
  bool ok = true;
};

struct InfValue {
  double value = 0.0;
  bool ok = true;
  bool converged = false;
};

double vanilla_pointwise(const TargetPair& tp, VecRef x);

// Finite-time estimator with t_+ = t_- + 1 on the grid over [-1, 1].
// t_minus in [-1, 0] must be a multiple of 1 / n_steps.
PointValue neis_pointwise(const TargetPair& tp, const FlowField& f, VecRef x, double t_minus,
                          int n_steps);

// Same quantity for t_- = 0, from the coupled forward/reversed ODE systems.
PointValue neis_pointwise_ode(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps);

// Ratio of full-line integrals truncated to [-window, window].
InfValue neis_pointwise_truncated_inf(const TargetPair& tp, const FlowField& f, VecRef x,
                                      double window, int n_steps);

enum class Method { kVanilla, kNeisIntegration, kNeisOde, kAis };

struct MethodSpec {
  Method method = Method::kNeisIntegration;
  double t_minus = 0.0;
  int n_steps = 50;
  int ais_k = 100;
  double ais_tau = 0.1;

  std::string tag() const;
  // Queries per sample: {U1, grad U1}.
  QueryCounts cost_per_sample() const;
};

struct EstimateReport {
  std::string method;
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // divide by n - 1
  double std_err = 0.0;
  std::uint64_t queries_u1 = 0;
  std::uint64_t queries_grad_u1 = 0;
  std::uint64_t seed = 0;
  std::size_t excluded = 0;
  double wall_time = 0.0;

  std::string to_json() const;
};

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;
  double std_err = 0.0;
};

// Pairwise-summed mean and (n - 1)-normalized variance.
SampleStats sample_stats(const std::vector<double>& values);

// Batch estimate over n base samples drawn with `seed`. The flow is ignored by
// the vanilla and AIS methods.
EstimateReport estimate(const TargetPair& tp, const FlowField* f, const MethodSpec& method,
                        std::size_t n, std::uint64_t seed);

namespace detail {

// Log-domain quadrature of the finite-time estimator from node values.
// logf0 covers nodes -N..N (2N + 1 values), logf1 the outer nodes
// p..p + N where p = (1 + t_minus) N. log_b[j] is the log of the inner window
// integral for outer node j.
struct WindowQuadrature {
  std::vector<double> log_b;
  double log_a = 0.0;
  bool ok = true;
};

WindowQuadrature window_quadrature(const std::vector<double>& logf0, const std::vector<double>& logf1,
                                   int n_steps);

// Quadrature weight of node j in 0..n, in units of the step: composite
// Simpson for even n, trapezoid otherwise.
inline double quad_weight(int j, int n) {
  if (n % 2) return (j == 0 || j == n) ? 0.5 : 1.0;
  if (j == 0 || j == n) return 1.0 / 3.0;
  return j % 2 ? 4.0 / 3.0 : 2.0 / 3.0;
}

double log_sum_exp(const std::vector<double>& v);

// Value and, when grad is non-null, parameter gradient of the t_- = 0
// estimator from the ODE systems.
PointValue ode_estimate(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps, Vec* grad);

}  // namespace detail

}  // namespace neis
