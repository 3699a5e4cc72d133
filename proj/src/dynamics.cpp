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

#include "neis/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace neis {

namespace {

std::atomic<int> g_fault{0};
constexpr double kInf = std::numeric_limits<double>::infinity();

bool blown_up(const Vec& y, int d) {
  const auto x = y.head(d);
  return !y.allFinite() || x.norm() > kBlowUp;
}

void mark_dead(Trajectory& tr, int idx) {
  tr.states[idx] = Vec::Constant(tr.states[tr.index(0)].size(), std::numeric_limits<double>::quiet_NaN());
  tr.log_jac[idx] = -kInf;
  tr.log_jac_trap[idx] = -kInf;
  tr.u0[idx] = kInf;
  tr.u1[idx] = kInf;
  tr.div[idx] = 0.0;
}

void check_grid(double t_lo, double t_hi, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be positive");
  if (t_lo > 0.0 || t_hi < 0.0) throw std::invalid_argument("need t_lo <= 0 <= t_hi");
}

}  // namespace

void set_fault(Fault f) { g_fault.store(static_cast<int>(f)); }
Fault active_fault() { return static_cast<Fault>(g_fault.load(std::memory_order_relaxed)); }

int grid_index(double t, int n_steps) {
  const double v = t * n_steps;
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9) throw std::invalid_argument("time is not on the grid");
  return static_cast<int>(r);
}

Trajectory integrate_trajectory(const FlowField& f, const TargetPair& tp, VecRef x, double t_lo,
                                double t_hi, int n_steps, const TrajectoryOptions& opts) {
  check_grid(t_lo, t_hi, n_steps);
  const int d = f.dim();
  if (x.size() != d || tp.dim() != d) throw std::invalid_argument("integrate_trajectory: dimension mismatch");
  Trajectory tr;
  tr.n_steps = n_steps;
  tr.m_lo = grid_index(t_lo, n_steps);
  tr.m_hi = grid_index(t_hi, n_steps);
  const int n = tr.size();
  tr.states.resize(n);
  tr.log_jac.assign(n, 0.0);
  tr.log_jac_trap.assign(n, 0.0);
  tr.u0.assign(n, 0.0);
  tr.u1.assign(n, std::numeric_limits<double>::quiet_NaN());
  tr.div.assign(n, 0.0);
  const double h = 1.0 / n_steps;
  const NodeRange u1_nodes = opts.u1_nodes.value_or(NodeRange{tr.m_lo, tr.m_hi});

  FlowEval ev;
  auto record = [&](int m, const Vec& y) {
    const int i = tr.index(m);
    tr.states[i] = y.head(d);
    tr.log_jac[i] = y[d];
    f.eval(tr.states[i], kNeedDiv, ev);
    tr.div[i] = ev.div_b;
    tr.u0[i] = tp.u0(tr.states[i]);
    if (u1_nodes.contains(m)) tr.u1[i] = tp.u1(tr.states[i]);
  };

  Rk4Work work;
  for (int dir : {1, -1}) {
    auto rhs = [&](const Vec& y, Vec& dy) {
      dy.resize(d + 1);
      f.eval(y.head(d), kNeedB | kNeedDiv, ev);
      dy.head(d) = dir * ev.b;
      dy[d] = dir * ev.div_b;
    };
    Vec y(d + 1);
    y.head(d) = x;
    y[d] = 0.0;
    if (dir == 1) record(0, y);
    const int last = dir == 1 ? tr.m_hi : tr.m_lo;
    bool dead = false;
    for (int m = dir; dir * m <= dir * last; m += dir) {
      if (!dead) {
        rk4_step(y, h, rhs, work);
        if (blown_up(y, d)) {
          dead = true;
          tr.truncated = true;
        }
      }
      if (dead) {
        mark_dead(tr, tr.index(m));
      } else {
        record(m, y);
      }
    }
  }
  // trapezoidal log J from node 0 outwards
  for (int m = 1; m <= tr.m_hi; ++m) {
    const int i = tr.index(m);
    tr.log_jac_trap[i] = tr.log_jac_trap[i - 1] + 0.5 * h * (tr.div[i - 1] + tr.div[i]);
  }
  for (int m = -1; m >= tr.m_lo; --m) {
    const int i = tr.index(m);
    tr.log_jac_trap[i] = tr.log_jac_trap[i + 1] - 0.5 * h * (tr.div[i + 1] + tr.div[i]);
  }
  for (int i = 0; i < n; ++i) {
    if (tr.log_jac[i] == -kInf) tr.log_jac_trap[i] = -kInf;
  }
  return tr;
}

SensitivityHistory integrate_sensitivity(const FlowField& f, const TargetPair& tp, VecRef x,
                                         double t_lo, double t_hi, int n_steps,
                                         const SensitivityOptions& opts) {
  check_grid(t_lo, t_hi, n_steps);
  const int d = f.dim();
  const int np = f.n_params();
  if (x.size() != d || tp.dim() != d) throw std::invalid_argument("integrate_sensitivity: dimension mismatch");
  SensitivityHistory out;
  Trajectory& tr = out.traj;
  tr.n_steps = n_steps;
  tr.m_lo = grid_index(t_lo, n_steps);
  tr.m_hi = grid_index(t_hi, n_steps);
  const int n = tr.size();
  tr.states.resize(n);
  tr.log_jac.assign(n, 0.0);
  tr.log_jac_trap.assign(n, 0.0);
  tr.u0.assign(n, 0.0);
  tr.u1.assign(n, std::numeric_limits<double>::quiet_NaN());
  tr.div.assign(n, 0.0);
  out.h.assign(n, Vec::Zero(np));
  out.l.assign(n, Vec::Zero(np));
  out.dlogf0.assign(n, Vec::Zero(np));
  out.dlogf1.assign(n, Vec::Zero(np));
  if (opts.store_delta_x) out.delta_x.assign(n, Mat::Zero(d, np));
  const double h = 1.0 / n_steps;
  const NodeRange u1_nodes = opts.u1_nodes.value_or(NodeRange{tr.m_lo, tr.m_hi});
  const NodeRange g1_nodes = opts.grad_u1_nodes.value_or(NodeRange{0, -1});

  // Per-node quantities; H and L need the node integrand, kept here.
  std::vector<Vec> hdot(n, Vec::Zero(np));
  std::vector<Vec> ldot(n, Vec::Zero(np));
  std::vector<char> alive(n, 1);

  FlowEval ev;
  auto record = [&](int m, const Vec& y) {
    const int i = tr.index(m);
    tr.states[i] = y.head(d);
    tr.log_jac[i] = y[d];
    Eigen::Map<const Mat> dx(y.data() + d + 1, d, np);
    if (opts.store_delta_x) out.delta_x[i] = dx;
    f.eval(tr.states[i], kNeedDiv | kNeedGradDiv | kNeedDthetaDiv, ev);
    tr.div[i] = ev.div_b;
    hdot[i].noalias() = dx.transpose() * ev.grad_div_b;
    ldot[i] = ev.dtheta_div_b;
    tr.u0[i] = tp.u0(tr.states[i]);
    out.dlogf0[i].noalias() = -(dx.transpose() * tp.grad_u0(tr.states[i]));
    if (u1_nodes.contains(m)) tr.u1[i] = tp.u1(tr.states[i]);
    if (g1_nodes.contains(m) && std::isfinite(tr.u1[i])) {
      out.dlogf1[i].noalias() = -(dx.transpose() * tp.grad_u1(tr.states[i]));
    }
  };

  Rk4Work work;
  const int width = d + 1 + d * np;
  for (int dir : {1, -1}) {
    auto rhs = [&](const Vec& y, Vec& dy) {
      dy.resize(width);
      f.eval(y.head(d), kNeedB | kNeedJac | kNeedDiv | kNeedDthetaB, ev);
      dy.head(d) = dir * ev.b;
      dy[d] = dir * ev.div_b;
      Eigen::Map<const Mat> dx(y.data() + d + 1, d, np);
      Eigen::Map<Mat> ddx(dy.data() + d + 1, d, np);
      ddx = ev.dtheta_b;
      ddx.noalias() += ev.jac_b * dx;
      if (dir < 0) ddx = -ddx;
    };
    Vec y = Vec::Zero(width);
    y.head(d) = x;
    if (dir == 1) record(0, y);
    const int last = dir == 1 ? tr.m_hi : tr.m_lo;
    bool dead = false;
    for (int m = dir; dir * m <= dir * last; m += dir) {
      if (!dead) {
        rk4_step(y, h, rhs, work);
        if (blown_up(y, d)) {
          dead = true;
          tr.truncated = true;
        }
      }
      if (dead) {
        mark_dead(tr, tr.index(m));
        alive[tr.index(m)] = 0;
      } else {
        record(m, y);
      }
    }
  }

  // trapezoidal log J, H, L outwards from node 0
  for (int m = 1; m <= tr.m_hi; ++m) {
    const int i = tr.index(m);
    tr.log_jac_trap[i] = tr.log_jac_trap[i - 1] + 0.5 * h * (tr.div[i - 1] + tr.div[i]);
    out.h[i] = out.h[i - 1] + (0.5 * h) * (hdot[i - 1] + hdot[i]);
    out.l[i] = out.l[i - 1] + (0.5 * h) * (ldot[i - 1] + ldot[i]);
  }
  for (int m = -1; m >= tr.m_lo; --m) {
    const int i = tr.index(m);
    tr.log_jac_trap[i] = tr.log_jac_trap[i + 1] - 0.5 * h * (tr.div[i + 1] + tr.div[i]);
    out.h[i] = out.h[i + 1] - (0.5 * h) * (hdot[i + 1] + hdot[i]);
    out.l[i] = out.l[i + 1] - (0.5 * h) * (ldot[i + 1] + ldot[i]);
  }
  for (int i = 0; i < n; ++i) {
    if (!alive[i]) {
      tr.log_jac_trap[i] = -kInf;
      out.dlogf0[i].setZero();
      out.dlogf1[i].setZero();
      continue;
    }
    const Vec hl = out.h[i] + out.l[i];
    out.dlogf0[i] += hl;
    out.dlogf1[i] += hl;
  }
  return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.precision(17);
  const auto d = traj.states.empty() ? 0 : traj.states.front().size();
  os << "m,t";
  for (Eigen::Index j = 0; j < d; ++j) os << ",x" << (j + 1);
  os << ",logJ,u0,u1,div\n";
  for (int m = traj.m_lo; m <= traj.m_hi; ++m) {
    const int i = traj.index(m);
    os << m << ',' << traj.time(m);
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << traj.states[i][j];
    os << ',' << traj.log_jac[i] << ',' << traj.u0[i] << ',' << traj.u1[i] << ',' << traj.div[i] << '\n';
  }
}

}  // namespace neis
