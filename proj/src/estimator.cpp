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

#include "neis/estimator.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "neis/ais.hpp"
#include "neis/parallel.hpp"

namespace neis {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

namespace detail {

double log_sum_exp(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

WindowQuadrature window_quadrature(const std::vector<double>& logf0, const std::vector<double>& logf1,
                                   int n_steps) {
  const int n = n_steps;
  if (static_cast<int>(logf0.size()) != 2 * n + 1 || static_cast<int>(logf1.size()) != n + 1) {
    throw std::invalid_argument("window_quadrature: bad node counts");
  }
  const double log_h = -std::log(static_cast<double>(n));
  WindowQuadrature q;
  q.log_b.resize(n + 1);
  std::vector<double> terms(n + 1);
  for (int j = 0; j <= n; ++j) {
    for (int k = 0; k <= n; ++k) terms[k] = std::log(quad_weight(k, n)) + logf0[j + k];
    q.log_b[j] = log_h + log_sum_exp(terms);
    if (!std::isfinite(q.log_b[j])) q.ok = false;
  }
  if (!q.ok) return q;
  for (int j = 0; j <= n; ++j) terms[j] = std::log(quad_weight(j, n)) + logf1[j] - q.log_b[j];
  q.log_a = log_h + log_sum_exp(terms);
  return q;
}

// State layout of the ODE systems. R: [XR, lJR, BR | dXR, HR, LR, gR].
// Forward: [alpha, B, X, Xl, lJ, lJl | d, g, H, Hl, L, Ll, dX, dXl].
PointValue ode_estimate(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps, Vec* grad) {
  const int d = f.dim();
  const int np = f.n_params();
  const bool with_grad = grad != nullptr;
  if (x.size() != d || tp.dim() != d) throw std::invalid_argument("neis_pointwise_ode: dimension mismatch");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be positive");
  const double h = 1.0 / n_steps;
  // Both F^0 and F^1 are scaled by exp(U0(x)); the ratio is unchanged.
  const double shift = tp.u0(x);
  const bool flip = active_fault() == Fault::kGradientSign;
  PointValue out;

  FlowEval ev, ev2;
  const unsigned need = with_grad ? kNeedAll : (kNeedB | kNeedDiv);
  Rk4Work work;

  // reversed system on [0, 1]
  const int r_x = 0, r_lj = d, r_b = d + 1, r_dx = d + 2;
  const int r_h = r_dx + d * np, r_l = r_h + np, r_g = r_l + np;
  const int r_size = with_grad ? r_g + np : d + 2;
  Vec yr = Vec::Zero(r_size);
  yr.segment(r_x, d) = x;
  auto rhs_r = [&](const Vec& y, Vec& dy) {
    dy.setZero(r_size);
    const auto xr = y.segment(r_x, d);
    f.eval(xr, need, ev);
    dy.segment(r_x, d) = -ev.b;
    dy[r_lj] = -ev.div_b;
    const double f0 = std::exp(-tp.u0(xr) + shift + y[r_lj]);
    dy[r_b] = f0;
    if (!with_grad) return;
    Eigen::Map<const Mat> dx(y.data() + r_dx, d, np);
    Eigen::Map<Mat> ddx(dy.data() + r_dx, d, np);
    ddx.noalias() = -(ev.jac_b * dx);
    ddx -= ev.dtheta_b;
    dy.segment(r_h, np).noalias() = -(dx.transpose() * ev.grad_div_b);
    dy.segment(r_l, np) = -ev.dtheta_div_b;
    Vec dlog = -(dx.transpose() * tp.grad_u0(xr));
    dlog += y.segment(r_h, np) + y.segment(r_l, np);
    dy.segment(r_g, np) = f0 * dlog;
  };
  for (int s = 0; s < n_steps; ++s) {
    rk4_step(yr, h, rhs_r, work);
    if (!yr.allFinite() || yr.segment(r_x, d).norm() > kBlowUp) {
      out.ok = false;
      return out;
    }
  }
  if (!(yr[r_b] > 0.0)) {
    out.ok = false;
    return out;
  }

  // forward system on [0, 1]
  const int o_a = 0, o_b = 1, o_x = 2, o_xl = 2 + d, o_lj = 2 + 2 * d, o_ljl = 3 + 2 * d;
  const int o_d = 4 + 2 * d, o_g = o_d + np, o_h = o_g + np, o_hl = o_h + np, o_l = o_hl + np,
            o_ll = o_l + np, o_dx = o_ll + np, o_dxl = o_dx + d * np;
  const int f_size = with_grad ? o_dxl + d * np : 4 + 2 * d;
  Vec y = Vec::Zero(f_size);
  y[o_b] = yr[r_b];
  y.segment(o_x, d) = x;
  y.segment(o_xl, d) = yr.segment(r_x, d);
  y[o_ljl] = yr[r_lj];
  if (with_grad) {
    y.segment(o_g, np) = yr.segment(r_g, np);
    y.segment(o_hl, np) = yr.segment(r_h, np);
    y.segment(o_ll, np) = yr.segment(r_l, np);
    y.segment(o_dxl, d * np) = yr.segment(r_dx, d * np);
  }
  bool degenerate = false;
  auto rhs = [&](const Vec& s, Vec& dy) {
    dy.setZero(f_size);
    const auto xs = s.segment(o_x, d);
    const auto xl = s.segment(o_xl, d);
    f.eval(xs, need, ev);
    f.eval(xl, need, ev2);
    const double bb = s[o_b];
    if (!(bb > 0.0)) degenerate = true;
    const double u1 = tp.u1(xs);
    const double f1 = std::isfinite(u1) ? std::exp(-u1 + shift + s[o_lj]) : 0.0;
    const double f0 = std::exp(-tp.u0(xs) + shift + s[o_lj]);
    const double f0l = std::exp(-tp.u0(xl) + shift + s[o_ljl]);
    dy[o_a] = f1 / bb;
    dy[o_b] = f0 - f0l;
    dy.segment(o_x, d) = ev.b;
    dy.segment(o_xl, d) = ev2.b;
    dy[o_lj] = ev.div_b;
    dy[o_ljl] = ev2.div_b;
    if (!with_grad) return;
    Eigen::Map<const Mat> dx(s.data() + o_dx, d, np);
    Eigen::Map<const Mat> dxl(s.data() + o_dxl, d, np);
    const auto hl = s.segment(o_h, np) + s.segment(o_l, np);
    const auto hll = s.segment(o_hl, np) + s.segment(o_ll, np);
    if (f1 > 0.0) {
      Vec dlog1 = -(dx.transpose() * tp.grad_u1(xs));
      dlog1 += hl;
      dy.segment(o_d, np) = (f1 / bb) * dlog1 - (f1 / (bb * bb)) * s.segment(o_g, np);
    } else {
      dy.segment(o_d, np).setZero();
    }
    Vec dlog0 = -(dx.transpose() * tp.grad_u0(xs));
    dlog0 += hl;
    Vec dlog0l = -(dxl.transpose() * tp.grad_u0(xl));
    dlog0l += hll;
    dy.segment(o_g, np) = f0 * dlog0 - f0l * dlog0l;
    if (flip) dy.segment(o_g, np) = -dy.segment(o_g, np);
    dy.segment(o_h, np).noalias() = dx.transpose() * ev.grad_div_b;
    dy.segment(o_hl, np).noalias() = dxl.transpose() * ev2.grad_div_b;
    dy.segment(o_l, np) = ev.dtheta_div_b;
    dy.segment(o_ll, np) = ev2.dtheta_div_b;
    Eigen::Map<Mat> ddx(dy.data() + o_dx, d, np);
    Eigen::Map<Mat> ddxl(dy.data() + o_dxl, d, np);
    ddx.noalias() = ev.jac_b * dx;
    ddx += ev.dtheta_b;
    ddxl.noalias() = ev2.jac_b * dxl;
    ddxl += ev2.dtheta_b;
  };
  for (int s = 0; s < n_steps; ++s) {
    rk4_step(y, h, rhs, work);
    if (degenerate || !y.allFinite() || y.segment(o_x, d).norm() > kBlowUp ||
        y.segment(o_xl, d).norm() > kBlowUp) {
      out.ok = false;
      return out;
    }
  }
  out.value = y[o_a];
  if (with_grad) *grad = y.segment(o_d, np);
  return out;
}

}  // namespace detail

double vanilla_pointwise(const TargetPair& tp, VecRef x) {
  const auto [u0, u1] = tp.eval_potentials(x);
  return std::exp(u0 - u1);
}

PointValue neis_pointwise(const TargetPair& tp, const FlowField& f, VecRef x, double t_minus,
                          int n_steps) {
  if (t_minus < -1.0 || t_minus > 0.0) throw std::invalid_argument("t_minus must lie in [-1, 0]");
  const int n = n_steps;
  const int p = grid_index(1.0 + t_minus, n);
  const Trajectory tr = integrate_trajectory(f, tp, x, -1.0, 1.0, n);
  std::vector<double> logf0(2 * n + 1), logf1(n + 1);
  for (int i = 0; i <= 2 * n; ++i) logf0[i] = -tr.u0[i] + tr.log_jac_trap[i];
  for (int j = 0; j <= n; ++j) logf1[j] = -tr.u1[p + j] + tr.log_jac_trap[p + j];
  const auto q = detail::window_quadrature(logf0, logf1, n);
  PointValue out;
  out.ok = q.ok;
  out.value = q.ok ? std::exp(q.log_a) : 0.0;
  return out;
}

PointValue neis_pointwise_ode(const TargetPair& tp, const FlowField& f, VecRef x, int n_steps) {
  return detail::ode_estimate(tp, f, x, n_steps, nullptr);
}

InfValue neis_pointwise_truncated_inf(const TargetPair& tp, const FlowField& f, VecRef x,
                                      double window, int n_steps) {
  const int mw = grid_index(window, n_steps);
  const double t = static_cast<double>(mw) / n_steps;
  const Trajectory tr = integrate_trajectory(f, tp, x, -t, t, n_steps);
  const int n = tr.size();
  std::vector<double> l0(n), l1(n);
  for (int i = 0; i < n; ++i) {
    const double w = std::log(detail::quad_weight(i, n - 1));
    l0[i] = w - tr.u0[i] + tr.log_jac[i];
    l1[i] = w - tr.u1[i] + tr.log_jac[i];
  }
  InfValue out;
  const double a0 = detail::log_sum_exp(l0);
  const double a1 = detail::log_sum_exp(l1);
  // A blown-up flowline contributes nothing past the blow-up; whether the
  // live part had already decayed is what `converged` reports.
  out.ok = std::isfinite(a0);
  out.value = out.ok ? std::exp(a1 - a0) : 0.0;
  int first = 0, last = n - 1;
  while (first < n && !std::isfinite(tr.log_jac[first])) ++first;
  while (last > first && !std::isfinite(tr.log_jac[last])) --last;
  // F^k at both live ends negligible against its peak
  auto decayed = [&](const std::vector<double>& lg) {
    if (first >= n) return false;
    double peak = -kInf;
    for (double v : lg) peak = std::max(peak, v);
    const double tol = std::log(1e-12);
    return lg[first] - peak < tol && lg[last] - peak < tol;
  };
  out.converged = decayed(l0) && (decayed(l1) || !std::isfinite(a1));
  return out;
}

std::string MethodSpec::tag() const {
  switch (method) {
    case Method::kVanilla: return "vanilla";
    case Method::kNeisIntegration: return "neis-integration";
    case Method::kNeisOde: return "neis-ode";
    case Method::kAis: return "ais-" + std::to_string(ais_k);
  }
  return "unknown";
}

QueryCounts MethodSpec::cost_per_sample() const {
  switch (method) {
    case Method::kVanilla: return {1, 0};
    case Method::kNeisIntegration: return {static_cast<std::uint64_t>(2 * n_steps + 1), 0};
    case Method::kNeisOde: return {static_cast<std::uint64_t>(4 * n_steps), 0};
    case Method::kAis: return {static_cast<std::uint64_t>(2 * ais_k), static_cast<std::uint64_t>(2 * ais_k)};
  }
  return {};
}

SampleStats sample_stats(const std::vector<double>& values) {
  SampleStats s;
  const auto n = values.size();
  if (n == 0) return s;
  s.mean = pairwise_sum(values) / static_cast<double>(n);
  if (n < 2) return s;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - s.mean) * (values[i] - s.mean);
  s.variance = pairwise_sum(sq) / static_cast<double>(n - 1);
  s.std_err = std::sqrt(s.variance / static_cast<double>(n));
  return s;
}

std::string EstimateReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["n"] = n;
  j["mean"] = mean;
  j["variance"] = variance;
  j["stderr"] = std_err;
  j["queries_u1"] = queries_u1;
  j["queries_grad_u1"] = queries_grad_u1;
  j["seed"] = seed;
  j["excluded"] = excluded;
  return j.dump();
}

EstimateReport estimate(const TargetPair& tp, const FlowField* f, const MethodSpec& method,
                        std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("estimate: need n >= 2");
  if (method.method == Method::kAis) {
    AisConfig cfg;
    cfg.k = method.ais_k;
    cfg.tau = method.ais_tau;
    cfg.n = n;
    cfg.seed = seed;
    return ais_estimate(tp, cfg);
  }
  if (method.method != Method::kVanilla && f == nullptr) throw std::invalid_argument("estimate: flow required");
  const auto start = std::chrono::steady_clock::now();
  const QueryCounts before = tp.counts();
  std::vector<double> values(n, 0.0);
  std::vector<char> ok(n, 1);
  parallel_for(n, [&](std::size_t i) {
    const Vec x = sample_base_one(tp, seed, i);
    PointValue v;
    switch (method.method) {
      case Method::kVanilla: v.value = vanilla_pointwise(tp, x); break;
      case Method::kNeisIntegration: v = neis_pointwise(tp, *f, x, method.t_minus, method.n_steps); break;
      case Method::kNeisOde: v = neis_pointwise_ode(tp, *f, x, method.n_steps); break;
      case Method::kAis: break;
    }
    values[i] = v.value;
    ok[i] = v.ok ? 1 : 0;
  });
  std::vector<double> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) kept.push_back(values[i]);
  }
  const auto stats = sample_stats(kept);
  const QueryCounts used = tp.counts() - before;
  EstimateReport r;
  r.method = method.tag();
  r.n = n;
  r.mean = stats.mean;
  r.variance = stats.variance;
  r.std_err = stats.std_err;
  r.queries_u1 = used.u1;
  r.queries_grad_u1 = used.grad_u1;
  r.seed = seed;
  r.excluded = n - kept.size();
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace neis
