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
#include <functional>

#include "neis/estimator.hpp"
#include "neis/rng.hpp"
#include "neis/targets.hpp"

namespace neis {

struct AisConfig {
  int k = 100;        // transitions; beta_j = j / k
  double tau = 0.1;   // MALA step
  std::size_t n = 0;  // chains
  std::uint64_t seed = 1;
};

// Mean and variance of the AIS weights over n independent chains. Each chain
// makes exactly 2k U1 queries and 2k grad U1 queries.
EstimateReport ais_estimate(const TargetPair& tp, const AisConfig& cfg);

// log pi and grad log pi at x. log_pi = -inf marks a point outside the support;
// grad is then left untouched.
using LogDensityFn = std::function<void(const Vec& x, double& log_pi, Vec& grad)>;

struct MalaPoint {
  Vec x;
  double log_pi = 0.0;
  Vec grad;
};

// One Metropolis-adjusted Langevin step. Returns true on acceptance.
bool mala_step(MalaPoint& cur, const LogDensityFn& target, double tau, CounterRng& rng);

// Chain of `steps` MALA steps from x0; returns the visited states (steps of them).
std::vector<Vec> mala_chain(const LogDensityFn& target, const Vec& x0, double tau, std::size_t steps,
                            std::uint64_t seed);

}  // namespace neis
