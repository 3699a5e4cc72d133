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

#include "neis/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

#include "neis/ais.hpp"
#include "neis/dynamics.hpp"
#include "neis/estimator.hpp"
#include "neis/rng.hpp"
#include "neis/zerovar.hpp"

namespace neis {

double jacobian_identity_error(const FlowField& f, const TargetPair& tp, VecRef x, int n_steps) {
  const int d = f.dim();
  auto end_state = [&](const Vec& y) {
    const Trajectory tr = integrate_trajectory(f, tp, y, 0.0, 1.0, n_steps, {NodeRange{0, -1}});
    return std::pair<Vec, double>{tr.states.back(), tr.log_jac.back()};
  };
  const double log_j = end_state(x).second;
  Mat jac(d, d);
  for (int k = 0; k < d; ++k) {
    const double eps = 1e-5 * std::max(1.0, std::abs(x[k]));
    Vec xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    jac.col(k) = (end_state(xp).first - end_state(xm).first) / (2.0 * eps);
  }
  const double det = jac.determinant();
  return std::abs(std::exp(log_j) - det) / std::abs(det);
}

FdCheck gradient_fd_check(const TargetPair& tp, const FlowField& f, const std::vector<Vec>& samples,
                          double t_minus, int n_steps, GradScheme scheme, int coords, std::uint64_t seed) {
  const int np = f.n_params();
  const BatchLoss base = grad_batch(tp, f, samples, t_minus, n_steps, false, scheme);
  std::vector<int> idx(np);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, 0, StreamPurpose::kMisc);
  for (int i = np - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(np, coords));
  const double scale = base.grad.cwiseAbs().maxCoeff();
  FdCheck out;
  for (int k : idx) {
    const Vec& th = f.theta();
    const double eps = 1e-5 * std::max(1.0, std::abs(th[k]));
    Vec tp_ = th, tm = th;
    tp_[k] += eps;
    tm[k] -= eps;
    const double lp = grad_batch(tp, f.with_theta(tp_), samples, t_minus, n_steps, false, scheme).loss;
    const double lm = grad_batch(tp, f.with_theta(tm), samples, t_minus, n_steps, false, scheme).loss;
    const double fd = (lp - lm) / (2.0 * eps);
    const double g = base.grad[k];
    const double denom = std::max({std::abs(fd), std::abs(g), 1e-6 * scale});
    out.max_rel_error = std::max(out.max_rel_error, denom > 0.0 ? std::abs(g - fd) / denom : 0.0);
    ++out.coords;
  }
  return out;
}

std::vector<TargetPair> smooth_1d_targets() {
  std::vector<TargetPair> out;
  out.push_back(TargetPair::custom_1d(
      {"shifted-gauss", [](double x) { return 2.0 * (x - 1.0) * (x - 1.0); },
       [](double x) { return 4.0 * (x - 1.0); }}));
  out.push_back(TargetPair::custom_1d(
      {"double-well", [](double x) { return 2.0 * (x * x - 1.0) * (x * x - 1.0); },
       [](double x) { return 8.0 * x * (x * x - 1.0); }}));
  out.push_back(TargetPair::custom_1d(
      {"sech2", [](double x) { return 2.0 * std::log(std::cosh(x - 0.5)); },
       [](double x) { return 2.0 * std::tanh(x - 0.5); }}));
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

CheckResult timed(const std::string& name, double limit, const std::function<double()>& body) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = name;
  r.limit = limit;
  try {
    r.value = body();
    r.pass = std::isfinite(r.value) && r.value < limit;
  } catch (const std::exception&) {
    r.value = std::numeric_limits<double>::quiet_NaN();
    r.pass = false;
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

}  // namespace

std::vector<CheckResult> run_selftest(std::ostream& os) {
  std::vector<CheckResult> rs;

  rs.push_back(timed("jacobian identity (gradient mlp)", 1e-4, [] {
    const TargetPair tp = TargetPair::gauss_mix_2d();
    const FlowField f = FlowField::gradient_mlp(2, 8, 7).with_scale(5.0);
    double worst = 0.0;
    for (const Vec& x : sample_base(tp, 5, 11)) worst = std::max(worst, jacobian_identity_error(f, tp, x, 20));
    return worst;
  }));

  auto fd_row = [&](const std::string& name, const TargetPair& tp, const FlowField& f, double t_minus,
                    int n_steps, GradScheme scheme) {
    rs.push_back(timed(name, 1e-4, [&] {
      const auto samples = sample_base(tp, 16, 5);
      return gradient_fd_check(tp, f, samples, t_minus, n_steps, scheme, 5, 3).max_rel_error;
    }));
  };
  {
    const TargetPair g2 = TargetPair::gauss_mix_2d();
    fd_row("gradient fd (gradient mlp)", g2, FlowField::gradient_mlp(2, 6, 21), 0.0, 20, GradScheme::kIntegration);
    fd_row("gradient fd (generic mlp)", g2, FlowField::generic_mlp(2, 6, 22), -0.5, 20, GradScheme::kIntegration);
    fd_row("gradient fd (generic linear)", g2, FlowField::generic_linear(2, 23), -1.0, 20,
           GradScheme::kIntegration);
    fd_row("gradient fd (ode scheme)", g2, FlowField::gradient_mlp(2, 6, 24), 0.0, 20, GradScheme::kOde);
    fd_row("gradient fd (funnel two-param)", TargetPair::funnel_10d(), FlowField::two_param_funnel(10), -0.5, 20,
           GradScheme::kIntegration);
  }

  rs.push_back(timed("constant flow 1d |A - Z1|", 1e-6, [] {
    double worst = 0.0;
    const FlowField f = FlowField::constant(Vec::Constant(1, 1.0));
    for (const TargetPair& tp : smooth_1d_targets()) {
      for (const Vec& x : sample_base(tp, 10, 17)) {
        const InfValue v = neis_pointwise_truncated_inf(tp, f, x, 30.0, 20);
        if (!v.ok || !v.converged) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(v.value - 1.0));
      }
    }
    return worst;
  }));

  rs.push_back(timed("gaussian linear flow variance", 1e-6, [] {
    double worst = 0.0;
    for (int d : {1, 2, 10}) {
      Vec var(d), mean(d);
      for (int i = 0; i < d; ++i) {
        var[i] = i % 2 ? 0.5 : 0.25;
        mean[i] = 0.5 - 0.1 * i;
      }
      const TargetPair tp = TargetPair::gaussian(var, mean);
      const FlowField f = gaussian_linear_flow(var, mean);
      std::vector<double> a;
      for (const Vec& x : sample_base(tp, 50, 9)) {
        const InfValue v = neis_pointwise_truncated_inf(tp, f, x, 45.0, 20);
        if (!v.ok || !v.converged) return std::numeric_limits<double>::infinity();
        a.push_back(v.value);
      }
      worst = std::max(worst, sample_stats(a).variance);
    }
    return worst;
  }));

  rs.push_back(timed("torus spectral flow spread", 1e-2, [] {
    const TargetPair tp = TargetPair::torus_mix_2d();
    const FlowField f = torus_zero_variance_flow(torus_poisson_solve(torus_source(tp, 64)));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Vec& x : sample_base(tp, 8, 19)) {
      const InfValue v = neis_pointwise_truncated_inf(tp, f, x, 32.0, 10);
      if (!v.ok) return std::numeric_limits<double>::infinity();
      lo = std::min(lo, v.value);
      hi = std::max(hi, v.value);
    }
    return hi - lo;
  }));

  rs.push_back(timed("ais with rho1 = rho0", 1e-12, [] {
    const TargetPair tp = TargetPair::gaussian(Vec::Ones(2), Vec::Zero(2));
    AisConfig cfg;
    cfg.k = 10;
    cfg.n = 100;
    cfg.seed = 4;
    const EstimateReport r = ais_estimate(tp, cfg);
    return std::abs(r.mean - 1.0) + std::sqrt(r.variance);
  }));

  rs.push_back(timed("query tally vs budget arithmetic", 0.5, [] {
    const TargetPair tp = TargetPair::gauss_mix_2d();
    const FlowField f = FlowField::gradient_mlp(2, 4, 1);
    MethodSpec m;
    m.n_steps = 10;
    const EstimateReport r = estimate(tp, &f, m, 20, 2);
    MethodSpec a;
    a.method = Method::kAis;
    a.ais_k = 5;
    const EstimateReport ra = estimate(tp, nullptr, a, 20, 2);
    const bool exact = r.queries_u1 == 20 * m.cost_per_sample().u1 && r.queries_grad_u1 == 0 &&
                       ra.queries_u1 == 20 * a.cost_per_sample().u1 &&
                       ra.queries_grad_u1 == 20 * a.cost_per_sample().grad_u1;
    return exact ? 0.0 : 1.0;
  }));

  char line[160];
  std::snprintf(line, sizeof line, "%-36s %-6s %12s %10s %8s\n", "check", "result", "value", "limit", "sec");
  os << line;
  for (const auto& r : rs) {
    std::snprintf(line, sizeof line, "%-36s %-6s %12.3e %10.1e %8.2f\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                  r.value, r.limit, r.seconds);
    os << line;
  }
  return rs;
}

}  // namespace neis
