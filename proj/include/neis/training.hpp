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

#include "neis/flows.hpp"
#include "neis/gradient.hpp"
#include "neis/targets.hpp"

namespace neis {

struct AssistConfig {
  double c = 0.1;        // initial replacement probability
  double upsilon = 0.6;  // fraction of steps with assistance
  double varsigma = 1.0;
  int z_steps = 10;
};

struct TrainConfig {
  int steps = 50;
  int batch = 200;
  double t_minus = 0.0;
  int n_steps = 50;
  double lr = 0.5;
  std::optional<AssistConfig> assist;
  std::uint64_t seed = 1;
  GradScheme scheme = GradScheme::kIntegration;
};

struct TrainRecord {
  int step = 0;
  double c_i = 0.0;
  double loss = 0.0;
  double variance = 0.0;  // under the biased sampler while c_i > 0
  double grad_norm = 0.0;
  bool biased = false;
  std::uint64_t theta_hash = 0;
  Vec theta;  // parameters the step was evaluated at
};

struct TrainHistory {
  std::vector<TrainRecord> records;
  Vec final_theta;
  Vec best_theta;
  int best_step = -1;
  double best_variance = 0.0;
  QueryCounts queries;
  bool aborted = false;
};

struct TrainResult {
  FlowField final_flow;
  FlowField best_flow;
  TrainHistory history;
};

// c_i = max(c - i c / (upsilon L), 0).
double assist_probability(const AssistConfig& a, int steps, int i);

// Time-1 map of dz/dt = -varsigma grad U1(z) by RK4 with z_steps steps.
// Returns x unchanged when the path leaves the domain or blows up.
Vec assist_map(const TargetPair& tp, VecRef x, double varsigma, int z_steps);

// Base draws, each replaced by its assist-map image with probability c_i.
std::vector<Vec> sample_biased(const TargetPair& tp, std::size_t n, double c_i, double varsigma,
                               int z_steps, std::uint64_t seed);

// Normalized-gradient descent theta <- theta - lr g / |g|. The rate halves
// once the assisted phase ends. The best flow has the smallest clean-batch
// variance among steps with c_i = 0.
TrainResult train(const TargetPair& tp, const FlowField& f0, const TrainConfig& cfg);

// step, c_i, loss, variance, grad_norm
void write_history_csv(const TrainHistory& h, const std::string& path);

std::uint64_t hash_theta(const Vec& theta);

}  // namespace neis
