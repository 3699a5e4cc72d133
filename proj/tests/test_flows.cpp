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
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "helpers.hpp"
#include "neis/flows.hpp"
#include "neis/rng.hpp"
#include "neis/special.hpp"

using namespace neis;
using neis::testing::rel_err;

namespace {

std::vector<FlowField> families(int d, std::uint64_t seed) {
  std::vector<FlowField> out = {FlowField::generic_mlp(d, 7, seed), FlowField::gradient_mlp(d, 7, seed + 1),
                                FlowField::generic_linear(d, seed + 2), FlowField::constant(Vec::LinSpaced(d, -0.5, 0.5)),
                                FlowField::linear_fixed(Mat::Random(d, d), Vec::LinSpaced(d, 0.1, 0.2))};
  // the funnel ansatz splits off the first coordinate
  if (d >= 2) out.push_back(FlowField::two_param_funnel(d, 1.3, 0.7));
  return out;
}

Vec random_point(int d, std::uint64_t seed) {
  CounterRng rng(seed, 0, StreamPurpose::kMisc);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

double max_rel(const Mat& a, const Mat& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-8});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_SUITE("flows") {

TEST_CASE("parameter counts follow the architecture") {
  CHECK(FlowField::generic_mlp(2, 20, 1).n_params() == 20 * 2 + 20 + 2 * 20 + 2);
  CHECK(FlowField::gradient_mlp(10, 30, 1).n_params() == 30 * 10 + 30 + 30);
  CHECK(FlowField::generic_linear(10, 1).n_params() == 110);
  CHECK(FlowField::two_param_funnel(10).n_params() == 2);
}

TEST_CASE("two-parameter funnel field at the ones vector") {
  const FlowField f = FlowField::two_param_funnel(10);
  const FlowEval ev = f.eval(Vec::Ones(10), kNeedAll);
  CHECK((ev.b - Vec::Constant(10, -2.0)).norm() < 1e-15);
  CHECK(ev.div_b == -18.0);
}

TEST_CASE("linear fixed field derivatives") {
  const Mat lam = Mat::Random(3, 3);
  const FlowField f = FlowField::linear_fixed(lam, Vec::Ones(3));
  const FlowEval ev = f.eval(Vec{{0.2, -1.0, 4.0}}, kNeedAll);
  CHECK((ev.jac_b - lam).norm() < 1e-15);
  CHECK(ev.div_b == doctest::Approx(lam.trace()));
  CHECK(ev.grad_div_b.norm() == 0.0);
}

TEST_CASE("constant field has zero jacobian and divergence") {
  const FlowField f = FlowField::constant(Vec{{1.0, -2.0}});
  const FlowEval ev = f.eval(Vec{{3.0, 4.0}}, kNeedAll);
  CHECK(ev.jac_b.norm() == 0.0);
  CHECK(ev.div_b == 0.0);
  CHECK((ev.b - Vec{{1.0, -2.0}}).norm() == 0.0);
}

TEST_CASE("divergence equals jacobian trace") {
  for (const FlowField& f : families(4, 3)) {
    const FlowEval ev = f.eval(random_point(4, 5), kNeedAll);
    CHECK(std::abs(ev.div_b - ev.jac_b.trace()) < 1e-12 * std::max(1.0, std::abs(ev.div_b)));
  }
}

TEST_CASE("unrequested fields stay unfilled") {
  const FlowField f = FlowField::gradient_mlp(2, 5, 1);
  const FlowEval ev = f.eval(Vec::Zero(2), kNeedB);
  CHECK(ev.has(kNeedB));
  CHECK_FALSE(ev.has(kNeedJac));
  CHECK(ev.jac_b.size() == 0);
}

TEST_CASE("gradient mlp jacobian is symmetric and matches finite differences") {
  const FlowField f = FlowField::gradient_mlp(3, 12, 9).with_theta(FlowField::gradient_mlp(3, 12, 9).theta() * 2.0);
  for (int r = 0; r < 5; ++r) {
    const Vec x = random_point(3, 100 + r);
    const FlowEval ev = f.eval(x, kNeedAll);
    CHECK((ev.jac_b - ev.jac_b.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Mat fd(3, 3);
    for (int i = 0; i < 3; ++i) {
      fd.row(i) = neis::testing::central_grad([&](const Vec& y) { return f.velocity(y)[i]; }, x, 1e-5).transpose();
    }
    CHECK(max_rel(ev.jac_b, fd) < 1e-5);
  }
}

TEST_CASE("spatial and parameter derivatives match finite differences for every family") {
  for (int d : {1, 2, 5}) {
    for (const FlowField& f : families(d, 11 + d)) {
      CAPTURE(to_string(f.kind()));
      CAPTURE(d);
      for (int r = 0; r < 10; ++r) {
        const Vec x = random_point(d, 1000 * d + r);
        const FlowEval ev = f.eval(x, kNeedAll);
        const Vec g = neis::testing::central_grad([&](const Vec& y) { return f.eval(y, kNeedDiv).div_b; }, x, 1e-5);
        CHECK(max_rel(ev.grad_div_b, g) < 1e-4);
        const int np = f.n_params();
        Mat db(d, np);
        Vec ddiv(np);
        for (int k = 0; k < np; ++k) {
          const double eps = 1e-6;
          Vec tp = f.theta(), tm = f.theta();
          tp[k] += eps;
          tm[k] -= eps;
          const FlowEval ep = f.with_theta(tp).eval(x, kNeedB | kNeedDiv);
          const FlowEval em = f.with_theta(tm).eval(x, kNeedB | kNeedDiv);
          db.col(k) = (ep.b - em.b) / (2.0 * eps);
          ddiv[k] = (ep.div_b - em.div_b) / (2.0 * eps);
        }
        CHECK(max_rel(ev.dtheta_b, db) < 1e-4);
        CHECK(max_rel(ev.dtheta_div_b, ddiv) < 1e-4);
      }
    }
  }
}

TEST_CASE("gradient mlp is curl free around closed square loops") {
  const FlowField f = FlowField::gradient_mlp(3, 10, 4);
  for (int r = 0; r < 20; ++r) {
    const Vec c = random_point(3, 500 + r);
    const int i = r % 3, j = (r + 1) % 3;
    const double side = 0.5;
    // Gauss-Legendre on each edge
    const double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
    const double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                               0.2369268850561891};
    Vec corners[5] = {c, c, c, c, c};
    corners[1][i] += side;
    corners[2][i] += side;
    corners[2][j] += side;
    corners[3][j] += side;
    double circ = 0.0, bmax = 0.0;
    for (int e = 0; e < 4; ++e) {
      const Vec a = corners[e], b = corners[e + 1];
      for (int q = 0; q < 5; ++q) {
        const Vec p = 0.5 * (a + b) + 0.5 * nodes[q] * (b - a);
        const Vec v = f.velocity(p);
        bmax = std::max(bmax, v.norm());
        circ += 0.5 * weights[q] * v.dot(b - a);
      }
    }
    CHECK(std::abs(circ) < 1e-8 * 4.0 * side * bmax);
  }
}

TEST_CASE("scaled field multiplies every output") {
  const FlowField f = FlowField::generic_mlp(2, 4, 3);
  const FlowField g = f.with_scale(3.0);
  const Vec x{{0.3, 0.1}};
  const FlowEval a = f.eval(x, kNeedAll), b = g.eval(x, kNeedAll);
  CHECK((3.0 * a.b - b.b).norm() < 1e-14);
  CHECK((3.0 * a.dtheta_b - b.dtheta_b).norm() < 1e-13);
}

TEST_CASE("initialization laws") {
  const FlowField f = FlowField::gradient_mlp(4, 50, 2);
  const double bound = 1.0 / std::sqrt(4.0);
  CHECK(f.theta().head(200).cwiseAbs().maxCoeff() <= bound);
  CHECK(f.theta().segment(200, 50).norm() == 0.0);
  const FlowField fun = FlowField::two_param_funnel(10);
  CHECK(fun.theta()[0] == 2.0);
  CHECK(fun.theta()[1] == 2.0);
}

TEST_CASE("radial mixture field with rho1 = rho0 vanishes") {
  GaussMixSpec s;
  s.weights = {1.0};
  s.means = {Vec::Zero(2)};
  s.variances = {Vec::Ones(2)};
  const FlowField f = FlowField::radial_mixture(s);
  for (int r = 0; r < 5; ++r) CHECK(f.velocity(random_point(2, 70 + r)).norm() < 1e-15);
}

TEST_CASE("radial mixture field at a mode center") {
  GaussMixSpec s;
  s.weights = {1.0};
  s.means = {Vec{{5.0, 0.0}}};
  s.variances = {Vec::Constant(2, 0.1)};
  const FlowField f = FlowField::radial_mixture(s);
  const Vec b = f.velocity(Vec{{5.0, 0.0}});
  const double expect = -(1.0 - std::exp(-12.5)) * 0.2 / (2.0 * std::numbers::pi);
  CHECK(b[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(b[1]) < 1e-15);
}

TEST_CASE("radial mixture divergence is rho1 - rho0") {
  for (const GaussMixSpec& s : {GaussMixSpec::asymmetric_two_mode_2d(), GaussMixSpec::symmetric_four_mode_10d()}) {
    GaussMixSpec iso = s;
    for (auto& v : iso.variances) v = Vec::Constant(v.size(), v[0]);
    const TargetPair tp = TargetPair::gauss_mix(iso);
    const FlowField f = FlowField::radial_mixture(iso);
    const int d = iso.dim();
    for (int r = 0; r < 30; ++r) {
      Vec x = random_point(d, 300 + r) * 2.0;
      if (r % 3 == 0) x += iso.means[r % iso.means.size()] * 0.9;
      const double rho = std::exp(-tp.u1(x)) - std::exp(-tp.u0(x));
      double div = 0.0;
      for (int k = 0; k < d; ++k) {
        div += neis::testing::central_diff([&](const Vec& y) { return f.velocity(y)[k]; }, x, k, 1e-5);
      }
      const double analytic = f.eval(x, kNeedDiv).div_b;
      CHECK(std::abs(analytic - rho) <= 1e-6 * std::max(std::abs(rho), 1e-3));
      CHECK(std::abs(div - rho) <= 1e-5 * std::max(std::abs(rho), 1e-2));
    }
  }
}

TEST_CASE("radial mixture rejects d = 1") {
  GaussMixSpec s;
  s.weights = {1.0};
  s.means = {Vec::Ones(1)};
  s.variances = {Vec::Ones(1)};
  CHECK_THROWS_AS(FlowField::radial_mixture(s), std::invalid_argument);
}

TEST_CASE("gaussian linear flow substitution") {
  SUBCASE("zero mean") {
    const FlowField f = gaussian_linear_flow(Vec::Constant(1, 0.25), Vec::Zero(1));
    CHECK(f.linear_matrix()(0, 0) == doctest::Approx(std::log(2.0)));
    CHECK(f.linear_offset()[0] == 0.0);
  }
  SUBCASE("unit mean") {
    const FlowField f = gaussian_linear_flow(Vec::Constant(1, 0.25), Vec::Ones(1));
    CHECK(f.linear_offset()[0] == doctest::Approx(-2.0 * std::log(2.0)));
  }
  SUBCASE("unit variance with a mean is rejected") {
    CHECK_THROWS_AS(gaussian_linear_flow(Vec::Ones(2), Vec{{0.0, 1.0}}), std::invalid_argument);
  }
}

TEST_CASE("softplus and sigmoid are overflow safe") {
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) == 0.0);
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("incomplete gamma against closed forms") {
  CHECK(special::lower_gamma(1.0, 12.5) == doctest::Approx(1.0 - std::exp(-12.5)).epsilon(1e-13));
  CHECK(special::gamma_p(0.5, 2.0) == doctest::Approx(std::erf(std::sqrt(2.0))).epsilon(1e-12));
  // Q(5, x) = e^-x sum_{k<5} x^k / k!
  CHECK(1.0 - special::gamma_p(5.0, 30.0) == doctest::Approx(std::exp(-30.0) * 38731.0).epsilon(1e-6));
  CHECK(special::scaled_lower_gamma(2.5, 0.0) == doctest::Approx(0.4));
  CHECK(special::scaled_lower_gamma_derivative(2.5, 0.0) == doctest::Approx(-1.0 / 3.5));
  const double u = 1e-3;
  CHECK(special::scaled_lower_gamma(1.0, u) == doctest::Approx((1.0 - std::exp(-u)) / u).epsilon(1e-12));
}

TEST_CASE("flow files round trip") {
  const auto dir = std::filesystem::temp_directory_path();
  for (const FlowField& f : {FlowField::gradient_mlp(3, 5, 1).with_scale(2.5), FlowField::two_param_funnel(10, 3, 4),
                             gaussian_linear_flow(Vec{{0.25, 0.5}}, Vec{{1.0, -1.0}})}) {
    const std::string path = (dir / "neis_flow_roundtrip.flow").string();
    save_flow(f, path);
    const FlowField g = load_flow(path);
    std::remove(path.c_str());
    CHECK(g.kind() == f.kind());
    CHECK(g.scale() == f.scale());
    CHECK((g.theta().array() == f.theta().array()).all());
    const Vec xd = Vec::LinSpaced(f.dim(), -0.4, 0.9);
    CHECK((g.velocity(xd) - f.velocity(xd)).norm() == 0.0);
  }
  CHECK_THROWS(load_flow((dir / "neis_no_such_file.flow").string()));
}

}  // TEST_SUITE
