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

#include "neis/ais.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "neis/parallel.hpp"

namespace neis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log q(to | from) up to a constant; grad is grad log pi at `from`.
double log_q(const Vec& to, const Vec& from, const Vec& grad, double tau) {
  return -(to - from - tau * grad).squaredNorm() / (4.0 * tau);
}

}  // namespace

bool mala_step(MalaPoint& cur, const LogDensityFn& target, double tau, CounterRng& rng) {
  const Eigen::Index d = cur.x.size();
  Vec prop(d);
  const double s = std::sqrt(2.0 * tau);
  for (Eigen::Index i = 0; i < d; ++i) prop[i] = cur.x[i] + tau * cur.grad[i] + s * rng.normal();
  const double u = rng.uniform();

  MalaPoint next;
  next.x = prop;
  next.grad = Vec::Zero(d);
  target(next.x, next.log_pi, next.grad);
  if (!(next.log_pi > -kInf)) return false;
  const double log_ratio = next.log_pi + log_q(cur.x, next.x, next.grad, tau) - cur.log_pi -
                           log_q(next.x, cur.x, cur.grad, tau);
  if (std::log(u) < log_ratio) {
    cur = std::move(next);
    return true;
  }
  return false;
}

std::vector<Vec> mala_chain(const LogDensityFn& target, const Vec& x0, double tau, std::size_t steps,
                            std::uint64_t seed) {
  MalaPoint cur;
  cur.x = x0;
  cur.grad = Vec::Zero(x0.size());
  target(cur.x, cur.log_pi, cur.grad);
  if (!(cur.log_pi > -kInf)) throw std::invalid_argument("mala_chain: start outside the support");
  CounterRng rng(seed, 0, StreamPurpose::kAis);
  std::vector<Vec> out;
  out.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    mala_step(cur, target, tau, rng);
    out.push_back(cur.x);
  }
  return out;
}

EstimateReport ais_estimate(const TargetPair& tp, const AisConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("ais: K must be at least 1");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("ais: tau must be positive");
  if (cfg.n < 2) throw std::invalid_argument("ais: need at least 2 chains");
  const auto start = std::chrono::steady_clock::now();
  const QueryCounts before = tp.counts();
  const int k = cfg.k;
  std::vector<double> log_w(cfg.n, 0.0);

  parallel_for(cfg.n, [&](std::size_t c) {
    CounterRng rng(cfg.seed, c, StreamPurpose::kAis);
    Vec x = sample_base_one(tp, cfg.seed, c);
    double lw = 0.0;
    for (int j = 1; j <= k; ++j) {
      const double beta = static_cast<double>(j) / k;
      const double dbeta = beta - static_cast<double>(j - 1) / k;
      // pi_j restricted to the domain; outside, U1 is +inf and grad U1 is
      // counted but never evaluated.
      auto target = [&](const Vec& y, double& lp, Vec& g) {
        const double u1 = tp.u1(y);
        if (!std::isfinite(u1)) {
          tp.tally().grad_u1.fetch_add(1, std::memory_order_relaxed);
          lp = -kInf;
          return;
        }
        lp = -((1.0 - beta) * tp.u0(y) + beta * u1);
        g = -((1.0 - beta) * tp.grad_u0(y) + beta * tp.grad_u1(y));
      };
      MalaPoint cur;
      cur.x = x;
      cur.grad = Vec::Zero(x.size());
      const double u1 = tp.u1(x);
      if (!std::isfinite(u1)) throw std::logic_error("ais: chain left the support of pi_j");
      const double u0 = tp.u0(x);
      lw += dbeta * (u0 - u1);
      cur.log_pi = -((1.0 - beta) * u0 + beta * u1);
      cur.grad = -((1.0 - beta) * tp.grad_u0(x) + beta * tp.grad_u1(x));
      mala_step(cur, target, cfg.tau, rng);
      x = std::move(cur.x);
    }
    log_w[c] = lw;
  });

  std::vector<double> w(cfg.n);
  for (std::size_t c = 0; c < cfg.n; ++c) w[c] = std::exp(log_w[c]);
  const auto stats = sample_stats(w);
  const QueryCounts used = tp.counts() - before;
  EstimateReport r;
  r.method = "ais-" + std::to_string(k);
  r.n = cfg.n;
  r.mean = stats.mean;
  r.variance = stats.variance;
  r.std_err = stats.std_err;
  r.queries_u1 = used.u1;
  r.queries_grad_u1 = used.grad_u1;
  r.seed = cfg.seed;
  r.excluded = 0;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace neis
