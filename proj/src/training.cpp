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

#include "neis/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "neis/dynamics.hpp"
#include "neis/parallel.hpp"
#include "neis/rng.hpp"

namespace neis {

double assist_probability(const AssistConfig& a, int steps, int i) {
  const double span = a.upsilon * steps;
  if (span <= 0.0) return 0.0;
  return std::max(a.c - i * a.c / span, 0.0);
}

Vec assist_map(const TargetPair& tp, VecRef x, double varsigma, int z_steps) {
  if (z_steps < 1) throw std::invalid_argument("assist_map: z_steps must be positive");
  const double h = 1.0 / z_steps;
  Vec z = x;
  Rk4Work work;
  bool failed = false;
  auto rhs = [&](const Vec& y, Vec& dy) {
    if (failed || !tp.inside(y)) {
      failed = true;
      dy = Vec::Zero(y.size());
      return;
    }
    dy = -varsigma * tp.grad_u1(y);
  };
  for (int s = 0; s < z_steps && !failed; ++s) {
    rk4_step(z, h, rhs, work);
    if (!z.allFinite() || z.norm() > kBlowUp || !tp.inside(z)) failed = true;
  }
  return failed ? Vec(x) : z;
}

std::vector<Vec> sample_biased(const TargetPair& tp, std::size_t n, double c_i, double varsigma,
                               int z_steps, std::uint64_t seed) {
  if (c_i < 0.0 || c_i > 1.0) throw std::invalid_argument("sample_biased: c_i must lie in [0, 1]");
  std::vector<Vec> out(n);
  parallel_for(n, [&](std::size_t i) {
    out[i] = sample_base_one(tp, seed, i);
    if (c_i <= 0.0) return;
    CounterRng coin(seed, i, StreamPurpose::kAssist);
    if (coin.uniform() < c_i) out[i] = assist_map(tp, out[i], varsigma, z_steps);
  });
  return out;
}

std::uint64_t hash_theta(const Vec& theta) {
  // FNV-1a over the raw bytes
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* p = reinterpret_cast<const unsigned char*>(theta.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(theta.size()) * sizeof(double); ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

TrainResult train(const TargetPair& tp, const FlowField& f0, const TrainConfig& cfg) {
  if (f0.dim() != tp.dim()) throw std::invalid_argument("train: flow and target dimensions differ");
  if (cfg.steps < 1 || cfg.batch < 2) throw std::invalid_argument("train: need steps >= 1 and batch >= 2");
  const QueryCounts before = tp.counts();
  TrainHistory hist;
  Vec theta = f0.theta();
  double best = std::numeric_limits<double>::infinity();
  Vec best_theta = theta;
  const int assisted_steps =
      cfg.assist ? static_cast<int>(std::ceil(cfg.assist->upsilon * cfg.steps - 1e-12)) : 0;

  for (int i = 0; i < cfg.steps; ++i) {
    const double c_i = cfg.assist ? assist_probability(*cfg.assist, cfg.steps, i) : 0.0;
    const std::uint64_t step_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const auto samples = c_i > 0.0 ? sample_biased(tp, cfg.batch, c_i, cfg.assist->varsigma,
                                                   cfg.assist->z_steps, step_seed)
                                   : sample_base(tp, cfg.batch, step_seed);
    const FlowField f = f0.with_theta(theta);
    const BatchLoss bl = grad_batch(tp, f, samples, cfg.t_minus, cfg.n_steps, c_i > 0.0, cfg.scheme);

    TrainRecord rec;
    rec.step = i;
    rec.c_i = c_i;
    rec.loss = bl.loss;
    rec.variance = bl.variance;
    rec.grad_norm = bl.grad.norm();
    rec.biased = c_i > 0.0;
    rec.theta_hash = hash_theta(theta);
    rec.theta = theta;
    hist.records.push_back(rec);
    if (!std::isfinite(bl.loss) || !bl.grad.allFinite()) {
      hist.aborted = true;
      break;
    }
    if (!rec.biased && bl.variance < best) {
      best = bl.variance;
      best_theta = theta;
      hist.best_step = i;
    }
    const double lr = (cfg.assist && i >= assisted_steps) ? 0.5 * cfg.lr : cfg.lr;
    if (rec.grad_norm >= 1e-12) theta -= (lr / rec.grad_norm) * bl.grad;
  }
  if (hist.best_step < 0) best_theta = theta;
  hist.final_theta = theta;
  hist.best_theta = best_theta;
  hist.best_variance = best;
  hist.queries = tp.counts() - before;
  return {f0.with_theta(theta), f0.with_theta(best_theta), std::move(hist)};
}

void write_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.precision(17);
  os << "step,c_i,loss,variance,grad_norm\n";
  for (const auto& r : h.records) {
    os << r.step << ',' << r.c_i << ',' << r.loss << ',' << r.variance << ',' << r.grad_norm << '\n';
  }
}

}  // namespace neis
