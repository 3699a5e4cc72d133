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
#include <memory>
#include <optional>
#include <string>

#include "neis/flows.hpp"
#include "neis/targets.hpp"

namespace neis {

struct TorusPoissonSolution {
  int n = 0;
  Mat v;    // v(i, j) = V(i / n, j / n)
  Mat rhs;  // source on the same grid
  double residual = 0.0;  // max |Laplacian V - rhs| on the grid, retained modes
  std::shared_ptr<const TorusModes> modes;
};

// Spectral solve of Laplacian V = rhs on the unit torus with mean(V) = 0.
// rhs is n x n (n a power of two) with grid mean below 1e-8. Modes with
// |coefficient| below prune * max are dropped from the interpolant.
TorusPoissonSolution torus_poisson_solve(const Mat& rhs, double prune = 1e-13);

// rho1 - rho0 sampled on the n x n torus grid.
Mat torus_source(const TargetPair& tp, int n);

// Gradient field of the solution, evaluated by trigonometric interpolation.
FlowField torus_zero_variance_flow(const TorusPoissonSolution& sol);

void write_grid_csv(const Mat& grid, const std::string& path);

struct TransportOptions {
  int n_steps = 50;      // RK4 steps per unit time
  double t_max = 80.0;   // give up beyond this time in either direction
  double decay = 1e-13;  // tail cut relative to the running peak of F
  double tol = 1e-12;    // on |L(x, kappa)| relative to the backward rho0 mass
};

struct TransportResult {
  double kappa = 0.0;
  Vec point;  // X_kappa(x)
  bool ok = false;
  bool monotone = true;  // every evaluated d/dt L was negative
};

// Solves int_{-inf}^0 rho0(X_s) J_s ds = int_{-inf}^kappa rho1(X_s) J_s ds for
// kappa. rho1 must be normalized (Z1 = 1).
TransportResult transport_time(const TargetPair& tp, const FlowField& f, VecRef x,
                               const TransportOptions& opts = {});

struct TransportCheck {
  double tv = 0.0;
  std::size_t failures = 0;
  std::size_t n = 0;
  int bins = 0;
};

// Binned total-variation distance between pushed base samples and rho1.
// 1D: `bins` equal bins on [lo, hi] plus one bin for the rest of the line.
// Torus: bins x bins cells of the unit square, points wrapped mod 1.
struct HistogramSpec {
  int bins = 50;
  double lo = -6.0;
  double hi = 6.0;
};

TransportCheck transport_map_check(const TargetPair& tp, const FlowField& f, std::size_t n,
                                   std::uint64_t seed, const HistogramSpec& hist,
                                   const TransportOptions& opts = {});

// Same statistic for n direct draws from rho0 against rho0's own bins.
double base_histogram_tv(const TargetPair& tp, std::size_t n, std::uint64_t seed,
                         const HistogramSpec& hist);

}  // namespace neis
