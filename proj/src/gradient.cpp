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

#include "neis/gradient.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "neis/dynamics.hpp"
#include "neis/estimator.hpp"
#include "neis/parallel.hpp"

namespace neis {

GradSample grad_pointwise_integration(const TargetPair& tp, const FlowField& f, VecRef x,
                                      double t_minus, int n_steps) {
  if (t_minus < -1.0 || t_minus > 0.0) throw std::invalid_argument("t_minus must lie in [-1, 0]");
  const int n = n_steps;
  const int np = f.n_params();
  const int p = grid_index(1.0 + t_minus, n);
  SensitivityOptions opts;
  opts.grad_u1_nodes = NodeRange{p - n, p};
  const SensitivityHistory s = integrate_sensitivity(f, tp, x, -1.0, 1.0, n, opts);
  const Trajectory& tr = s.traj;

  std::vector<double> logf0(2 * n + 1), logf1(n + 1);
  for (int i = 0; i <= 2 * n; ++i) logf0[i] = -tr.u0[i] + tr.log_jac_trap[i];
  for (int j = 0; j <= n; ++j) logf1[j] = -tr.u1[p + j] + tr.log_jac_trap[p + j];
  const auto q = detail::window_quadrature(logf0, logf1, n);

  GradSample out;
  out.a_grad = Vec::Zero(np);
  out.ok = q.ok && !tr.truncated;
  if (!q.ok) return out;
  out.a_value = std::exp(q.log_a);

  const double log_h = -std::log(static_cast<double>(n));
  const double sign = active_fault() == Fault::kGradientSign ? -1.0 : 1.0;
  Vec db(np);
  for (int j = 0; j <= n; ++j) {
    if (!std::isfinite(logf1[j])) continue;
    const double cj = std::exp(std::log(detail::quad_weight(j, n)) + log_h + logf1[j] - q.log_b[j]);
    if (cj == 0.0) continue;
    // d log B_j = sum_m what_jm dlogF0_m
    db.setZero();
    for (int k = 0; k <= n; ++k) {
      const double w = std::exp(std::log(detail::quad_weight(k, n)) + log_h + logf0[j + k] - q.log_b[j]);
      if (w != 0.0) db.noalias() += w * s.dlogf0[j + k];
    }
    out.a_grad.noalias() += cj * (s.dlogf1[p + j] - sign * db);
  }
  return out;
}

GradSample grad_pointwise_ode(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps) {
  GradSample out;
  out.a_grad = Vec::Zero(f.n_params());
  const PointValue v = detail::ode_estimate(tp, f, x, n_steps, &out.a_grad);
  out.a_value = v.value;
  out.ok = v.ok;
  return out;
}

BatchLoss grad_batch(const TargetPair& tp, const FlowField& f, const std::vector<Vec>& samples,
                     double t_minus, int n_steps, bool centered, GradScheme scheme) {
  if (samples.size() < 2) throw std::invalid_argument("grad_batch: need at least 2 samples");
  if (scheme == GradScheme::kOde && t_minus != 0.0) {
    throw std::invalid_argument("grad_batch: the ODE scheme requires t_minus = 0");
  }
  const std::size_t n = samples.size();
  std::vector<GradSample> gs(n);
  parallel_for(n, [&](std::size_t i) {
    gs[i] = scheme == GradScheme::kOde ? grad_pointwise_ode(tp, f, samples[i], n_steps)
                                       : grad_pointwise_integration(tp, f, samples[i], t_minus, n_steps);
  });
  std::vector<double> a;
  std::vector<Vec> ga;
  a.reserve(n);
  ga.reserve(n);
  for (auto& g : gs) {
    if (!g.ok) continue;
    a.push_back(g.a_value);
    ga.push_back(std::move(g.a_grad));
  }
  BatchLoss out;
  out.excluded = n - a.size();
  out.grad = Vec::Zero(f.n_params());
  if (a.size() < 2) {
    out.loss = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const auto stats = sample_stats(a);
  out.mean_a = stats.mean;
  out.variance = stats.variance;
  const double center = centered ? stats.mean : 0.0;
  const double m = static_cast<double>(a.size());
  std::vector<double> sq(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - center;
    sq[i] = r * r;
    ga[i] *= 2.0 * r;
  }
  out.loss = pairwise_sum(sq) / m;
  if (f.n_params() > 0) out.grad = pairwise_sum(ga) / m;
  return out;
}

}  // namespace neis
