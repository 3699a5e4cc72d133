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

#include "neis/parallel.hpp"

#include <omp.h>

namespace neis {

void set_worker_count(int workers) {
  if (workers > 0) omp_set_num_threads(workers);
}

int worker_count() { return omp_get_max_threads(); }

namespace {

constexpr std::size_t kLeaf = 8;

double sum_range(std::span<const double> v) {
  if (v.size() <= kLeaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return sum_range(v.first(half)) + sum_range(v.subspan(half));
}

Eigen::VectorXd sum_range(std::span<const Eigen::VectorXd> v) {
  if (v.size() <= kLeaf) {
    Eigen::VectorXd s = v.front();
    for (std::size_t i = 1; i < v.size(); ++i) s += v[i];
    return s;
  }
  const std::size_t half = v.size() / 2;
  return sum_range(v.first(half)) + sum_range(v.subspan(half));
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return sum_range(values);
}

Eigen::VectorXd pairwise_sum(std::span<const Eigen::VectorXd> values) {
  if (values.empty()) return {};
  return sum_range(values);
}

}  // namespace neis
