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
#include <stdexcept>
#include <string>

#include "neis/estimator.hpp"
#include "neis/flows.hpp"
#include "neis/targets.hpp"
#include "neis/training.hpp"

namespace neis {

// Bad or inconsistent configuration. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TargetBlock {
  std::string name = "gaussmix2d";  // gaussmix2d, gaussmix10d, funnel10d, torus2d, gaussian
  Vec variances;                    // gaussian only
  Vec mean;
  double funnel_radius = 25.0;
};

struct FlowBlock {
  std::string kind = "gradient_mlp";  // any FlowKind name, gaussian_linear, torus_spectral or none
  int width = 20;
  int layers = 2;
  std::uint64_t seed = 1;
  std::string params;  // flow file; overrides random initialization
  double alpha = 2.0;  // two_param_funnel
  double beta = 2.0;
  Vec velocity;   // constant
  int grid = 64;  // torus_spectral
  double prune = 1e-13;
};

struct MethodBlock {
  MethodSpec spec;
  std::optional<std::size_t> n;
  std::optional<double> budget;  // U1 queries
  int repeat = 1;
};

struct ExperimentConfig {
  TargetBlock target;
  FlowBlock flow;
  MethodBlock method;
  std::optional<TrainConfig> train;
  std::uint64_t seed = 1;
  int workers = 0;  // 0: library default
  std::string out = "neis-out";
  // compare only
  int compare_ais_k = 100;
  bool deduct_training = true;  // NEIS budget per estimate loses the training U1 queries
  std::optional<double> compare_neis_budget;  // explicit NEIS budget per estimate
  // transport only
  std::size_t transport_n = 10000;
  int transport_bins = 50;
};

// "4.2e6", "4200000", "4.2MB" or "4.2 MB" (1 MB = 1e6 queries).
double parse_budget(const std::string& text);

// INI file with sections [target], [flow], [method], [train], [compare],
// [transport], [output]. Unknown keys are rejected.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

// Sample count for a budget: floor(budget / U1 cost per sample).
std::size_t samples_for_budget(const MethodSpec& m, double budget);

TargetPair build_target(const TargetBlock& b);
// Returns nullopt for kind = none.
std::optional<FlowField> build_flow(const FlowBlock& b, const TargetPair& tp);

}  // namespace neis
