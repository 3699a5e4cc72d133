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
#include <ostream>
#include <string>
#include <vector>

#include "neis/flows.hpp"
#include "neis/gradient.hpp"
#include "neis/targets.hpp"

namespace neis {

// Relative gap between exp(log J_1(x)) and the determinant of a central
// finite-difference Jacobian of the discrete time-1 map.
double jacobian_identity_error(const FlowField& f, const TargetPair& tp, VecRef x, int n_steps);

struct FdCheck {
  double max_rel_error = 0.0;
  int coords = 0;
};

// Parameter gradient of the batch second moment mean(A^2) against central
// differences on common samples, over `coords` random coordinates.
FdCheck gradient_fd_check(const TargetPair& tp, const FlowField& f, const std::vector<Vec>& samples,
                          double t_minus, int n_steps, GradScheme scheme, int coords, std::uint64_t seed);

// Three smooth normalized 1D targets used by the constant-flow oracle.
std::vector<TargetPair> smooth_1d_targets();

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
  double seconds = 0.0;
};

// Invariant and oracle suite; prints one row per check.
std::vector<CheckResult> run_selftest(std::ostream& os);

}  // namespace neis
