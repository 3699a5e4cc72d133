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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "neis/dynamics.hpp"
#include "neis/selftest.hpp"

using namespace neis;

namespace {

const TrajectoryOptions kNoU1{NodeRange{0, -1}};

Vec end_state(const FlowField& f, const TargetPair& tp, const Vec& x, double t, int n) {
  return integrate_trajectory(f, tp, x, 0.0, t, n, kNoU1).states.back();
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("linear flow b = x over unit time") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::linear_fixed(Mat::Identity(2, 2), Vec::Zero(2));
  const Trajectory tr = integrate_trajectory(f, tp, Vec{{1.0, 0.0}}, 0.0, 1.0, 50);
  CHECK(std::abs(tr.states.back()[0] - std::numbers::e) < 1e-7);
  CHECK(std::abs(tr.states.back()[1]) < 1e-15);
  CHECK(std::abs(tr.log_jac.back() - 2.0) < 1e-7);
  CHECK(tr.log_jac[tr.index(0)] == 0.0);
  CHECK((tr.states[tr.index(0)] - Vec{{1.0, 0.0}}).norm() == 0.0);
}

TEST_CASE("constant flow moves in a straight line") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const Vec v{{0.3, -1.1}};
  const FlowField f = FlowField::constant(v);
  const Vec x{{0.5, 0.25}};
  const Trajectory tr = integrate_trajectory(f, tp, x, -1.0, 1.0, 20);
  for (int m = tr.m_lo; m <= tr.m_hi; ++m) {
    CHECK((tr.states[tr.index(m)] - (x + tr.time(m) * v)).norm() < 1e-14);
    CHECK(tr.log_jac[tr.index(m)] == 0.0);
  }
}

TEST_CASE("backward branch reverses the forward map") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 8, 3);
  const Vec x{{0.2, -0.4}};
  const Vec y = end_state(f, tp, x, 1.0, 400);
  const Trajectory back = integrate_trajectory(f, tp, y, -1.0, 0.0, 400, kNoU1);
  CHECK((back.states.front() - x).norm() < 1e-10);
}

TEST_CASE("radial mixture flow converges under refinement") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  GaussMixSpec s = GaussMixSpec::asymmetric_two_mode_2d();
  const FlowField f = FlowField::radial_mixture(s);
  const Vec x{{0.5, 0.5}};
  const Trajectory a = integrate_trajectory(f, tp, x, -1.0, 1.0, 50, kNoU1);
  const Trajectory ref = integrate_trajectory(f, tp, x, -1.0, 1.0, 800, kNoU1);
  double worst = 0.0;
  for (int m = -50; m <= 50; ++m) worst = std::max(worst, (a.states[a.index(m)] - ref.states[ref.index(16 * m)]).norm());
  CHECK(worst < 1e-6);
}

TEST_CASE("rk4 error shrinks with order four") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  Mat lam(2, 2);
  lam << 0.5, -1.0, 1.0, 0.3;
  const FlowField f = FlowField::linear_fixed(lam, Vec{{0.2, -0.1}});
  const Vec x{{1.0, 0.5}};
  const Vec exact = end_state(f, tp, x, 2.0, 4000);
  double prev = 0.0;
  for (int n : {5, 10, 20, 40}) {
    const double err = (end_state(f, tp, x, 2.0, n) - exact).norm();
    if (prev > 0.0) CHECK(prev / err >= 12.0);
    prev = err;
  }
}

TEST_CASE("log jacobian agrees with the trapezoid of the divergence") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 10, 5).with_scale(2.0);
  const Trajectory tr = integrate_trajectory(f, tp, Vec{{0.1, 0.7}}, -1.0, 1.0, 200, kNoU1);
  double worst = 0.0;
  for (int i = 0; i < tr.size(); ++i) worst = std::max(worst, std::abs(tr.log_jac[i] - tr.log_jac_trap[i]));
  CHECK(worst < 1e-4);
  CHECK(tr.log_jac_trap[tr.index(0)] == 0.0);
}

TEST_CASE("jacobian determinant identity at 20 random points") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const TargetPair tp3 = TargetPair::gaussian(Vec::Ones(3), Vec::Zero(3));
  double worst = 0.0;
  int r = 0;
  for (const Vec& x : sample_base(tp, 10, 81)) {
    const FlowField f = (r++ % 2 ? FlowField::generic_mlp(2, 6, r) : FlowField::gradient_mlp(2, 6, r)).with_scale(3.0);
    worst = std::max(worst, jacobian_identity_error(f, tp, x, 20));
  }
  for (const Vec& x : sample_base(tp3, 10, 82)) {
    worst = std::max(worst, jacobian_identity_error(FlowField::generic_mlp(3, 6, r++).with_scale(2.0), tp3, x, 20));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("group property on grid-aligned times") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 8, 12).with_scale(2.0);
  const Vec x{{0.3, 0.3}};
  const Vec direct = end_state(f, tp, x, 1.0, 100);
  const Vec two = end_state(f, tp, end_state(f, tp, x, 0.4, 100), 0.6, 100);
  CHECK((direct - two).norm() < 1e-12);
}

TEST_CASE("rescaled field traces the same flowline faster") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 8, 13);
  const Vec x{{-0.3, 0.8}};
  for (double alpha : {2.0, 5.0}) {
    const Trajectory fast = integrate_trajectory(f.with_scale(alpha), tp, x, 0.0, 1.0, 500, kNoU1);
    const Trajectory slow = integrate_trajectory(f, tp, x, 0.0, alpha, 500, kNoU1);
    double worst = 0.0;
    for (int m = 0; m <= 500; m += 50) {
      const int ms = static_cast<int>(std::lround(m * alpha));
      worst = std::max(worst, (fast.states[fast.index(m)] - slow.states[slow.index(ms)]).norm());
      worst = std::max(worst, std::abs(fast.log_jac[fast.index(m)] - slow.log_jac[slow.index(ms)]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("blow-up truncates and zeroes the tail") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::linear_fixed(Mat::Identity(2, 2) * 20.0, Vec::Zero(2));
  const Trajectory tr = integrate_trajectory(f, tp, Vec{{1.0, 1.0}}, 0.0, 1.0, 50);
  CHECK(tr.truncated);
  CHECK(std::isinf(tr.log_jac.back()));
  CHECK(std::isinf(tr.u1.back()));
}

TEST_CASE("u1 is queried only on the requested nodes") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 4, 1);
  const QueryCounts before = tp.counts();
  const Trajectory tr = integrate_trajectory(f, tp, Vec::Zero(2), -1.0, 1.0, 10, {NodeRange{0, 10}});
  CHECK((tp.counts() - before).u1 == 11);
  CHECK(std::isnan(tr.u1[tr.index(-3)]));
  CHECK(std::isfinite(tr.u1[tr.index(3)]));
}

TEST_CASE("off-grid times are rejected") {
  CHECK(grid_index(0.5, 50) == 25);
  CHECK(grid_index(-1.0, 60) == -60);
  CHECK_THROWS(grid_index(0.013, 50));
}

TEST_CASE("sensitivity of a constant flow in 1d") {
  const TargetPair tp = TargetPair::gaussian(Vec::Ones(1), Vec::Zero(1));
  const FlowField f = FlowField::constant(Vec::Constant(1, 0.7));
  SensitivityOptions o;
  o.store_delta_x = true;
  const SensitivityHistory s = integrate_sensitivity(f, tp, Vec::Constant(1, 0.2), -1.0, 1.0, 10, o);
  for (int m = -10; m <= 10; ++m) {
    const int i = s.traj.index(m);
    CHECK(std::abs(s.delta_x[i](0, 0) - s.traj.time(m)) < 1e-14);
    CHECK(s.h[i].norm() == 0.0);
    CHECK(s.l[i].norm() == 0.0);
  }
  CHECK(s.delta_x[s.traj.index(0)].norm() == 0.0);
}

TEST_CASE("sensitivity of a scaled linear flow against finite differences") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  Mat lam(2, 2);
  lam << -0.4, 0.9, -0.7, 0.2;
  const FlowField f = FlowField::linear_fixed(lam, Vec{{0.3, 0.1}});
  const Vec x{{0.6, -0.2}};
  SensitivityOptions o;
  o.store_delta_x = true;
  const SensitivityHistory s = integrate_sensitivity(f, tp, x, -1.0, 1.0, 40, o);
  const double eps = 1e-6;
  const Trajectory tp_ = integrate_trajectory(f.with_theta(Vec::Constant(1, 1.0 + eps)), tp, x, -1.0, 1.0, 40, kNoU1);
  const Trajectory tm = integrate_trajectory(f.with_theta(Vec::Constant(1, 1.0 - eps)), tp, x, -1.0, 1.0, 40, kNoU1);
  double worst = 0.0;
  for (int i = 0; i < s.traj.size(); ++i) {
    const Vec fd = (tp_.states[i] - tm.states[i]) / (2.0 * eps);
    if (fd.norm() > 1e-8) worst = std::max(worst, (s.delta_x[i].col(0) - fd).norm() / fd.norm());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient mlp sensitivities reproduce finite differences of log F") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 10, 6).with_scale(2.0);
  const Vec x{{0.4, -0.9}};
  SensitivityOptions o;
  o.grad_u1_nodes = NodeRange{-20, 20};
  const SensitivityHistory s = integrate_sensitivity(f, tp, x, -1.0, 1.0, 20, o);
  auto logf = [&](const FlowField& g, int k) {
    const Trajectory tr = integrate_trajectory(g, tp, x, -1.0, 1.0, 20);
    std::vector<double> out;
    for (int i = 0; i < tr.size(); ++i) out.push_back((k == 0 ? -tr.u0[i] : -tr.u1[i]) + tr.log_jac_trap[i]);
    return out;
  };
  double worst = 0.0;
  for (int j : {0, 5, 13, 21, 27}) {
    const double eps = 1e-6;
    Vec tp_ = f.theta(), tm = f.theta();
    tp_[j] += eps;
    tm[j] -= eps;
    for (int k = 0; k < 2; ++k) {
      const auto lp = logf(f.with_theta(tp_), k), lm = logf(f.with_theta(tm), k);
      for (int i = 0; i < s.traj.size(); i += 3) {
        const double fd = (lp[i] - lm[i]) / (2.0 * eps);
        const double an = (k == 0 ? s.dlogf0[i] : s.dlogf1[i])[j];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("trajectory csv has one row per node") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const Trajectory tr = integrate_trajectory(FlowField::gradient_mlp(2, 4, 1), tp, Vec::Zero(2), -1.0, 1.0, 5);
  const auto path = (std::filesystem::temp_directory_path() / "neis_traj.csv").string();
  write_trajectory_csv(tr, path);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line.rfind("m,t,x1,x2,logJ,u0,u1,div", 0) == 0);
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 11);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
