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

#include <atomic>
#include <optional>
#include <vector>

#include "neis/flows.hpp"
#include "neis/targets.hpp"

namespace neis {

// Deliberate defects for mutation checks in the selftest.
enum class Fault { kNone = 0, kRk4Weights = 1, kGradientSign = 2 };
void set_fault(Fault f);
Fault active_fault();

struct Rk4Work {
  Vec k1, k2, k3, k4, tmp;
};

// One classical RK4 step of y' = rhs(y), rhs(const Vec& y, Vec& dy).
template <class Rhs>
void rk4_step(Vec& y, double h, Rhs&& rhs, Rk4Work& w) {
  rhs(y, w.k1);
  w.tmp = y + (0.5 * h) * w.k1;
  rhs(w.tmp, w.k2);
  w.tmp = y + (0.5 * h) * w.k2;
  rhs(w.tmp, w.k3);
  w.tmp = y + h * w.k3;
  rhs(w.tmp, w.k4);
  if (active_fault() == Fault::kRk4Weights) {
    y += (h / 6.0) * (2.0 * w.k1 + w.k2 + 2.0 * w.k3 + w.k4);
  } else {
    y += (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
  }
}

// Inclusive node-index range on the grid t_m = m / n_steps.
struct NodeRange {
  int lo = 0;
  int hi = -1;
  bool contains(int m) const { return m >= lo && m <= hi; }
};

// |X| beyond this, or a non-finite state, truncates a trajectory.
inline constexpr double kBlowUp = 1e6;

// Nodes m_lo..m_hi of a flowline through x at t = 0. log_jac is the RK4 state,
// log_jac_trap the trapezoidal cumulative of div. Nodes past a blow-up keep
// log_jac = -inf and u = +inf, so every F there is 0.
struct Trajectory {
  int n_steps = 0;
  int m_lo = 0;
  int m_hi = 0;
  std::vector<Vec> states;
  std::vector<double> log_jac;
  std::vector<double> log_jac_trap;
  std::vector<double> u0;
  std::vector<double> u1;
  std::vector<double> div;
  bool truncated = false;

  int size() const { return m_hi - m_lo + 1; }
  int index(int m) const { return m - m_lo; }
  double time(int m) const { return static_cast<double>(m) / n_steps; }
};

struct TrajectoryOptions {
  // Nodes where U1 is queried; the rest keep u1 = NaN. Default: all nodes.
  std::optional<NodeRange> u1_nodes;
};

// Integrates dX/dt = b(X) and d log J / dt = div b forward on [0, t_hi] and
// backward on [t_lo, 0] with n_steps RK4 steps per unit time. t_lo and t_hi
// must be multiples of 1 / n_steps.
Trajectory integrate_trajectory(const FlowField& f, const TargetPair& tp, VecRef x, double t_lo,
                                double t_hi, int n_steps, const TrajectoryOptions& opts = {});

// Parameter sensitivities along a trajectory. delta_x follows the RK4
// linearization, H and L are trapezoidal, and
//   dlogf0[m] = -grad U0 . delta_x + H + L   (every node)
//   dlogf1[m] = -grad U1 . delta_x + H + L   (nodes in grad_u1_nodes with finite U1)
struct SensitivityHistory {
  Trajectory traj;
  std::vector<Mat> delta_x;  // filled only when requested
  std::vector<Vec> h;
  std::vector<Vec> l;
  std::vector<Vec> dlogf0;
  std::vector<Vec> dlogf1;
};

struct SensitivityOptions {
  std::optional<NodeRange> u1_nodes;
  std::optional<NodeRange> grad_u1_nodes;
  bool store_delta_x = false;
};

SensitivityHistory integrate_sensitivity(const FlowField& f, const TargetPair& tp, VecRef x,
                                         double t_lo, double t_hi, int n_steps,
                                         const SensitivityOptions& opts = {});

// Time-grid index for t with spacing 1 / n_steps; throws when t is off-grid.
int grid_index(double t, int n_steps);

// Writes m, t, x_1..x_d, logJ, u0, u1, div.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace neis
