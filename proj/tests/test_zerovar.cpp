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

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>

#include "neis/estimator.hpp"
#include "neis/zerovar.hpp"

using namespace neis;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Mat grid_of(int n, double (*fn)(double, double)) {
  Mat g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g(i, j) = fn(static_cast<double>(i) / n, static_cast<double>(j) / n);
  }
  return g;
}

}  // namespace

TEST_SUITE("zerovar") {

TEST_CASE("poisson solve of a zero source") {
  const TorusPoissonSolution s = torus_poisson_solve(Mat::Zero(32, 32));
  CHECK(s.v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("poisson solve of a single cosine mode") {
  const TorusPoissonSolution s =
      torus_poisson_solve(grid_of(64, [](double x, double) { return std::cos(kTwoPi * x); }));
  const Mat expect = grid_of(64, [](double x, double) { return -std::cos(kTwoPi * x) / (kTwoPi * kTwoPi); });
  CHECK((s.v - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(s.v.mean()) < 1e-15);
  // off-grid interpolation and gradient
  const FlowField f = torus_zero_variance_flow(s);
  const Vec x{{0.123, 0.77}};
  CHECK(s.modes->value(x) == doctest::Approx(-std::cos(kTwoPi * 0.123) / (kTwoPi * kTwoPi)).epsilon(1e-12));
  CHECK(f.velocity(x)[0] == doctest::Approx(std::sin(kTwoPi * 0.123) / kTwoPi).epsilon(1e-12));
  CHECK(std::abs(f.velocity(x)[1]) < 1e-14);
}

TEST_CASE("torus mixture source: residual and refinement") {
  const TargetPair tp = TargetPair::torus_mix_2d();
  const TorusPoissonSolution a = torus_poisson_solve(torus_source(tp, 256));
  const TorusPoissonSolution b = torus_poisson_solve(torus_source(tp, 512));
  CHECK(a.residual < 1e-8);
  CHECK(std::abs(a.v.mean()) < 1e-12);
  double worst = 0.0;
  for (int i = 0; i < 256; i += 7) {
    for (int j = 0; j < 256; j += 7) worst = std::max(worst, std::abs(a.v(i, j) - b.v(2 * i, 2 * j)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("poisson solve rejects bad sources") {
  CHECK_THROWS_AS(torus_poisson_solve(Mat::Ones(32, 32)), std::invalid_argument);
  CHECK_THROWS_AS(torus_poisson_solve(Mat::Zero(48, 48)), std::invalid_argument);
  CHECK_THROWS_AS(torus_source(TargetPair::gauss_mix_2d(), 32), std::invalid_argument);
}

TEST_CASE("transport time is zero when rho1 = rho0") {
  const TargetPair tp = TargetPair::gaussian(Vec::Ones(1), Vec::Zero(1));
  const FlowField f = FlowField::constant(Vec::Constant(1, 1.0));
  for (const Vec& x : sample_base(tp, 10, 1)) {
    const TransportResult r = transport_time(tp, f, x);
    REQUIRE(r.ok);
    CHECK(std::abs(r.kappa) < 1e-9);
  }
}

TEST_CASE("1d gaussian: kappa is log sigma") {
  const double sigma = 0.5, omega = 0.7;
  const TargetPair tp = TargetPair::gaussian(Vec::Constant(1, sigma * sigma), Vec::Constant(1, omega));
  const FlowField f = FlowField::linear_fixed(Mat::Identity(1, 1), Vec::Constant(1, -omega / (1.0 - sigma)));
  for (const Vec& x : sample_base(tp, 20, 2)) {
    const TransportResult r = transport_time(tp, f, x);
    REQUIRE(r.ok);
    CHECK(r.monotone);
    CHECK(std::abs(r.kappa - std::log(sigma)) < 1e-6);
  }
}

TEST_CASE("1d constant flow: kappa is F1^-1(F0(x)) - x") {
  const TargetPair tp = TargetPair::gaussian(Vec::Constant(1, 0.5), Vec::Constant(1, 1.0));
  const FlowField f = FlowField::constant(Vec::Constant(1, 1.0));
  const boost::math::normal_distribution<double> n0(0.0, 1.0), n1(1.0, std::sqrt(0.5));
  for (const Vec& x : sample_base(tp, 20, 3)) {
    const TransportResult r = transport_time(tp, f, x);
    REQUIRE(r.ok);
    const double expect = boost::math::quantile(n1, boost::math::cdf(n0, x[0])) - x[0];
    CHECK(std::abs(r.kappa - expect) < 1e-6);
    CHECK(std::abs(r.point[0] - (x[0] + r.kappa)) < 1e-12);
  }
}

TEST_CASE("pushforward histograms") {
  const HistogramSpec h{50, -6.0, 6.0};
  SUBCASE("rho1 = rho0 matches the Monte Carlo baseline") {
    const TargetPair tp = TargetPair::gaussian(Vec::Ones(1), Vec::Zero(1));
    const TransportCheck c = transport_map_check(tp, FlowField::constant(Vec::Constant(1, 1.0)), 10000, 4, h);
    const double base = base_histogram_tv(tp, 10000, 4, h);
    CHECK(c.failures == 0);
    CHECK(c.tv <= 2.0 * base + 1e-12);
  }
  SUBCASE("gaussian with sigma = 0.5") {
    const Vec var = Vec::Constant(1, 0.25);
    const TargetPair tp = TargetPair::gaussian(var, Vec::Zero(1));
    // binomial noise alone is about 0.01 at this n
    const TransportCheck c = transport_map_check(tp, gaussian_linear_flow(var, Vec::Zero(1)), 20000, 5, h);
    CHECK(c.failures == 0);
    CHECK(c.tv < 0.03);
  }
}

TEST_CASE("torus spectral flow keeps the truncated estimator constant") {
  const TargetPair tp = TargetPair::torus_mix_2d();
  const FlowField f = torus_zero_variance_flow(torus_poisson_solve(torus_source(tp, 64)));
  double lo = 1e300, hi = -1e300;
  for (const Vec& x : sample_base(tp, 20, 6)) {
    const InfValue v = neis_pointwise_truncated_inf(tp, f, x, 32.0, 10);
    REQUIRE(v.ok);
    lo = std::min(lo, v.value);
    hi = std::max(hi, v.value);
  }
  CHECK(hi - lo < 1e-2);
}

}  // TEST_SUITE
