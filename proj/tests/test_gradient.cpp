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

#include "helpers.hpp"
#include "neis/gradient.hpp"
#include "neis/rng.hpp"
#include "neis/selftest.hpp"

using namespace neis;

TEST_SUITE("gradient") {

TEST_CASE("symmetric 1d problem has zero gradient at theta = 0") {
  const TargetPair tp = TargetPair::gaussian(Vec::Ones(1), Vec::Zero(1));
  const FlowField f = FlowField::constant(Vec::Zero(1));
  std::vector<Vec> xs;
  for (const Vec& x : sample_base(tp, 50, 1)) {
    xs.push_back(x);
    xs.push_back(-x);
  }
  for (double tm : {0.0, -0.5}) {
    const BatchLoss b = grad_batch(tp, f, xs, tm, 20, false);
    CHECK(std::abs(b.grad[0]) < 1e-12);
  }
}

TEST_CASE("funnel two-parameter gradient against finite differences") {
  const TargetPair tp = TargetPair::funnel_10d();
  const FlowField f = FlowField::two_param_funnel(10);
  const auto xs = sample_base(tp, 32, 2);
  const FdCheck c = gradient_fd_check(tp, f, xs, -0.5, 100, GradScheme::kIntegration, 2, 1);
  CHECK(c.coords == 2);
  CHECK(c.max_rel_error < 1e-4);
}

TEST_CASE("gradient mlp on gaussmix2d against finite differences") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 20, 3).with_scale(2.0);
  const auto xs = sample_base(tp, 16, 3);
  const FdCheck c = gradient_fd_check(tp, f, xs, 0.0, 50, GradScheme::kIntegration, 5, 2);
  CHECK(c.coords == 5);
  CHECK(c.max_rel_error < 1e-3);
}

TEST_CASE("every ansatz family passes the finite-difference check with both schemes") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const auto xs = sample_base(tp, 12, 4);
  for (const FlowField& f : {FlowField::generic_mlp(2, 6, 5), FlowField::gradient_mlp(2, 6, 6),
                             FlowField::generic_linear(2, 7), FlowField::two_param_funnel(2)}) {
    CAPTURE(to_string(f.kind()));
    CHECK(gradient_fd_check(tp, f, xs, -0.5, 20, GradScheme::kIntegration, 5, 3).max_rel_error < 1e-4);
    CHECK(gradient_fd_check(tp, f, xs, 0.0, 20, GradScheme::kOde, 5, 4).max_rel_error < 1e-4);
  }
}

TEST_CASE("dead parameters get an exactly zero gradient") {
  const int d = 2, m = 4;
  const TargetPair tp = TargetPair::gauss_mix_2d();
  Vec th = FlowField::generic_mlp(d, m, 8).theta();
  const int k = 1;
  for (int i = 0; i < d; ++i) th[m * d + m + i * m + k] = 0.0;
  const FlowField f = FlowField::generic_mlp(d, m, 8).with_theta(th);
  for (const Vec& x : sample_base(tp, 3, 5)) {
    const GradSample g = grad_pointwise_ode(tp, f, x, 20);
    for (int j = 0; j < d; ++j) CHECK(g.a_grad[k * d + j] == 0.0);
    CHECK(g.a_grad[m * d + k] == 0.0);
    const GradSample h = grad_pointwise_integration(tp, f, x, 0.0, 20);
    CHECK(h.a_grad[m * d + k] == 0.0);
  }
}

TEST_CASE("ode and integration schemes agree on value and gradient") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 10, 9).with_scale(3.0);
  for (const Vec& x : sample_base(tp, 10, 6)) {
    const GradSample a = grad_pointwise_integration(tp, f, x, 0.0, 50);
    const GradSample b = grad_pointwise_ode(tp, f, x, 50);
    REQUIRE(a.ok);
    REQUIRE(b.ok);
    CHECK(std::abs(a.a_value - b.a_value) / a.a_value < 1e-3);
    CHECK((a.a_grad - b.a_grad).norm() / a.a_grad.norm() < 1e-3);
  }
}

TEST_CASE("constant estimator gives zero centered loss and gradient") {
  const TargetPair tp = TargetPair::gaussian(Vec::Ones(2), Vec::Zero(2));
  const FlowField f = FlowField::constant(Vec::Zero(2));
  const auto xs = sample_base(tp, 20, 7);
  const BatchLoss b = grad_batch(tp, f, xs, -0.5, 20, true);
  CHECK(b.loss < 1e-28);
  CHECK(b.grad.norm() < 1e-14);
  CHECK(b.mean_a == doctest::Approx(1.0));
}

TEST_CASE("batch gradient matches a random directional derivative") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 20, 10).with_scale(2.0);
  const auto xs = sample_base(tp, 200, 8);
  const BatchLoss b = grad_batch(tp, f, xs, 0.0, 50, false);
  CounterRng rng(9, 0, StreamPurpose::kMisc);
  Vec dir(f.n_params());
  for (int i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
  dir.normalize();
  const double eps = 1e-5;
  const double lp = grad_batch(tp, f.with_theta(f.theta() + eps * dir), xs, 0.0, 50, false).loss;
  const double lm = grad_batch(tp, f.with_theta(f.theta() - eps * dir), xs, 0.0, 50, false).loss;
  const double fd = (lp - lm) / (2.0 * eps);
  CHECK(std::abs(fd - b.grad.dot(dir)) / std::abs(fd) < 1e-3);
}

TEST_CASE("batch loss bookkeeping") {
  const TargetPair tp = TargetPair::gauss_mix_2d();
  const FlowField f = FlowField::gradient_mlp(2, 5, 11);
  const auto xs = sample_base(tp, 30, 9);
  const BatchLoss u = grad_batch(tp, f, xs, -0.2, 10, false);
  const BatchLoss c = grad_batch(tp, f, xs, -0.2, 10, true);
  // mean(A^2) - Abar^2 = (n-1)/n var
  CHECK(u.loss - u.mean_a * u.mean_a == doctest::Approx(c.loss).epsilon(1e-10));
  CHECK(c.loss == doctest::Approx(u.variance * 29.0 / 30.0).epsilon(1e-10));
  CHECK((u.grad - c.grad).norm() > 0.0);
}

TEST_CASE("uncentered gradient vanishes on average for a flow-invariant mean") {
  // E A = 1 for every theta, so E dA = 0; with A near 1 both gradients are small
  const TargetPair tp = TargetPair::gaussian(Vec::Ones(2), Vec::Zero(2));
  const FlowField f = FlowField::constant(Vec::Zero(2));
  std::vector<Vec> per;
  for (const Vec& x : sample_base(tp, 2000, 10)) {
    const GradSample g = grad_pointwise_integration(tp, f, x, -0.5, 20);
    per.push_back(2.0 * g.a_value * g.a_grad);
  }
  Vec mean = Vec::Zero(2), sq = Vec::Zero(2);
  for (const Vec& v : per) mean += v;
  mean /= per.size();
  for (const Vec& v : per) sq += (v - mean).cwiseAbs2();
  const Vec se = (sq / (per.size() - 1.0) / per.size()).cwiseSqrt();
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean[i]) <= 4.0 * se[i] + 1e-14);
}

}  // TEST_SUITE
