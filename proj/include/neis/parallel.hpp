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

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace neis {

// Worker count used by batch loops; 0 leaves the OpenMP default.
void set_worker_count(int workers);
int worker_count();

// Runs body(i) for i in [0, n) across the worker pool. Each index must write
// only its own output slot; the caller reduces afterwards in fixed order.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

// Pairwise (tree) summation; the tree shape depends only on the length, so
// results are bit-stable across worker counts.
double pairwise_sum(std::span<const double> values);

// Pairwise summation of equally sized vectors.
Eigen::VectorXd pairwise_sum(std::span<const Eigen::VectorXd> values);

}  // namespace neis
