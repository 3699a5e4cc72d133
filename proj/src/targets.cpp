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

#include "neis/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "neis/rng.hpp"

namespace neis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// log N(x; mu, diag(var))
double log_gauss_diag(VecRef x, const Vec& mu, const Vec& var) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double r = x[i] - mu[i];
    acc += r * r / var[i] + std::log(var[i]) + kLog2Pi;
  }
  return -0.5 * acc;
}

// log of  int N(x; ma, a) N(x; mb, b) / N(x; 0, 1) dx  in one dimension.
double log_ratio_integral_1d(double ma, double a, double mb, double b) {
  const double precision = 1.0 / a + 1.0 / b - 1.0;
  if (precision <= 0.0) return kInf;
  const double lin = ma / a + mb / b;
  const double cst = -0.5 * ma * ma / a - 0.5 * mb * mb / b;
  return -0.5 * (std::log(a) + std::log(b)) - 0.5 * kLog2Pi + 0.5 * kLog2Pi -
         0.5 * std::log(precision) + lin * lin / (2.0 * precision) + cst;
}

double torus_phi_log(VecRef x, const Vec& c) {
  const double tau = 2.0 * std::numbers::pi;
  return 2.0 * std::cos(tau * (x[0] - c[0])) + 2.0 * std::cos(tau * (x[1] - c[1]));
}

}  // namespace

// ---------------------------------------------------------------------------
// GaussMixSpec

void GaussMixSpec::validate() const {
  if (weights.empty()) throw std::invalid_argument("GaussMixSpec: no components");
  if (means.size() != weights.size() || variances.size() != weights.size()) {
    throw std::invalid_argument("GaussMixSpec: component counts differ");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("GaussMixSpec: weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("GaussMixSpec: weights must sum to 1");
  const auto d = means.front().size();
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i].size() != d || variances[i].size() != d) {
      throw std::invalid_argument("GaussMixSpec: dimension mismatch");
    }
    if (!(variances[i].array() > 0.0).all()) {
      throw std::invalid_argument("GaussMixSpec: variances must be positive");
    }
  }
}

bool GaussMixSpec::isotropic() const {
  for (const auto& v : variances) {
    if ((v.array() != v[0]).any()) return false;
  }
  return true;
}

GaussMixSpec GaussMixSpec::asymmetric_two_mode_2d() {
  const double lambda = 5.0;
  const double var = 0.1;
  GaussMixSpec s;
  s.weights = {0.2, 0.8};
  s.means = {Vec::Unit(2, 0) * lambda, -Vec::Unit(2, 1) * lambda};
  s.variances = {Vec::Constant(2, var), Vec::Constant(2, var)};
  return s;
}

GaussMixSpec GaussMixSpec::symmetric_four_mode_10d() {
  const int d = 10;
  const double lambda = 5.0;
  Vec var = Vec::Constant(d, 0.5);
  var[0] = var[1] = 0.1;
  GaussMixSpec s;
  for (int i = 1; i <= 4; ++i) {
    Vec mu = Vec::Zero(d);
    const double angle = i * std::numbers::pi / 2.0;
    mu[0] = std::round(lambda * std::cos(angle) * 1e12) / 1e12;
    mu[1] = std::round(lambda * std::sin(angle) * 1e12) / 1e12;
    s.weights.push_back(0.25);
    s.means.push_back(mu);
    s.variances.push_back(var);
  }
  return s;
}

// ---------------------------------------------------------------------------
// TargetPair construction

TargetPair::TargetPair(std::string name, int dim, Domain domain, Family family,
                       std::optional<double> log_z1)
    : name_(std::move(name)),
      dim_(dim),
      domain_(domain),
      family_(std::make_shared<const Family>(std::move(family))),
      exact_log_z1_(log_z1),
      tally_(std::make_shared<QueryTally>()) {
  if (dim_ < 1) throw std::invalid_argument("TargetPair: dimension must be positive");
}

TargetPair TargetPair::gauss_mix(const GaussMixSpec& spec, std::string name) {
  spec.validate();
  return TargetPair(std::move(name), spec.dim(), Domain{}, spec, 0.0);
}

TargetPair TargetPair::gauss_mix_2d() {
  return gauss_mix(GaussMixSpec::asymmetric_two_mode_2d(), "gaussmix2d");
}

TargetPair TargetPair::gauss_mix_10d() {
  return gauss_mix(GaussMixSpec::symmetric_four_mode_10d(), "gaussmix10d");
}

TargetPair TargetPair::funnel_10d(double radius) {
  // The truncation outside the ball removes a negligible amount of mass, so
  // log Z1 is recorded as 0.
  return TargetPair("funnel10d", 10, Domain{DomainKind::kBall, radius}, Funnel{radius}, 0.0);
}

TargetPair TargetPair::torus_mix_2d() {
  Torus t;
  t.centers = {Vec{{0.3, 0.3}}, Vec{{0.7, 0.3}}, Vec{{0.3, 0.7}}};
  // Each shifted phi integrates to I0(2)^2 over the unit torus.
  const double i0 = std::cyl_bessel_i(0.0, 2.0);
  t.log_norm = 2.0 * std::log(i0);
  return TargetPair("torus2d", 2, Domain{DomainKind::kTorus, 0.0}, t, 0.0);
}

TargetPair TargetPair::gaussian(const Vec& variances, const Vec& mean) {
  GaussMixSpec s;
  s.weights = {1.0};
  s.means = {mean};
  s.variances = {variances};
  return gauss_mix(s, "gaussian");
}

TargetPair TargetPair::custom_1d(Custom1D target) {
  if (!target.u || !target.grad) throw std::invalid_argument("custom_1d: missing callables");
  auto integrand = [&](double y) { return std::exp(-target.u(y)); };
  const double z = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -kInf, kInf, 15, 1e-14);
  if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("custom_1d: non-normalizable target");
  std::string name = target.name.empty() ? "custom1d" : target.name;
  Custom c{std::move(target), std::log(z)};
  return TargetPair(std::move(name), 1, Domain{}, std::move(c), 0.0);
}

TargetPair TargetPair::with_u1_offset(double c) const {
  TargetPair copy = *this;
  copy.u1_offset_ += c;
  if (copy.exact_log_z1_) *copy.exact_log_z1_ -= c;
  copy.tally_ = std::make_shared<QueryTally>();
  return copy;
}

const GaussMixSpec* TargetPair::mixture() const { return std::get_if<GaussMixSpec>(family_.get()); }

// ---------------------------------------------------------------------------
// Evaluation

void TargetPair::check_dim(VecRef x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("TargetPair: point has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(dim_));
  }
}

bool TargetPair::inside(VecRef x) const {
  if (domain_.kind == DomainKind::kBall) return x.norm() < domain_.radius;
  return x.allFinite();
}

double TargetPair::u0(VecRef x) const {
  if (domain_.kind == DomainKind::kTorus) return 0.0;
  return 0.5 * x.squaredNorm() + 0.5 * dim_ * kLog2Pi;
}

Vec TargetPair::grad_u0(VecRef x) const {
  if (domain_.kind == DomainKind::kTorus) return Vec::Zero(x.size());
  return x;
}

double TargetPair::raw_u1(VecRef x) const {
  if (!inside(x)) return kInf;
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussMixSpec>) {
          double buf[16];
          std::vector<double> heap;
          double* terms = buf;
          if (f.weights.size() > 16) {
            heap.resize(f.weights.size());
            terms = heap.data();
          }
          for (std::size_t i = 0; i < f.weights.size(); ++i) {
            terms[i] = std::log(f.weights[i]) + log_gauss_diag(x, f.means[i], f.variances[i]);
          }
          return -log_sum_exp({terms, f.weights.size()});
        } else if constexpr (std::is_same_v<T, Funnel>) {
          const double x1 = x[0];
          double u = x1 * x1 / 18.0 + 0.5 * std::log(18.0 * std::numbers::pi);
          const double inv = std::exp(-x1);
          for (Eigen::Index i = 1; i < x.size(); ++i) {
            u += 0.5 * x[i] * x[i] * inv + 0.5 * x1 + 0.5 * kLog2Pi;
          }
          return u;
        } else if constexpr (std::is_same_v<T, Torus>) {
          const double terms[3] = {torus_phi_log(x, f.centers[0]), torus_phi_log(x, f.centers[1]),
                                   torus_phi_log(x, f.centers[2])};
          return -(log_sum_exp(terms) - std::log(3.0)) + f.log_norm;
        } else {
          return f.fn.u(x[0]) + f.log_norm;
        }
      },
      *family_);
}

Vec TargetPair::raw_grad_u1(VecRef x) const {
  if (!inside(x)) throw std::domain_error("grad U1 evaluated outside the target domain");
  return std::visit(
      [&](const auto& f) -> Vec {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussMixSpec>) {
          const std::size_t k = f.weights.size();
          std::vector<double> logw(k);
          for (std::size_t i = 0; i < k; ++i) {
            logw[i] = std::log(f.weights[i]) + log_gauss_diag(x, f.means[i], f.variances[i]);
          }
          const double lse = log_sum_exp(logw);
          Vec g = Vec::Zero(x.size());
          for (std::size_t i = 0; i < k; ++i) {
            const double r = std::exp(logw[i] - lse);
            if (r == 0.0) continue;
            g.array() += r * (x - f.means[i]).array() / f.variances[i].array();
          }
          return g;
        } else if constexpr (std::is_same_v<T, Funnel>) {
          Vec g(x.size());
          const double inv = std::exp(-x[0]);
          double g1 = x[0] / 9.0;
          for (Eigen::Index i = 1; i < x.size(); ++i) {
            g1 += 0.5 - 0.5 * x[i] * x[i] * inv;
            g[i] = x[i] * inv;
          }
          g[0] = g1;
          return g;
        } else if constexpr (std::is_same_v<T, Torus>) {
          const double tau = 2.0 * std::numbers::pi;
          double logs[3];
          for (int i = 0; i < 3; ++i) logs[i] = torus_phi_log(x, f.centers[i]);
          const double lse = log_sum_exp(logs);
          Vec g = Vec::Zero(2);
          for (int i = 0; i < 3; ++i) {
            const double r = std::exp(logs[i] - lse);
            // d/dx of -log phi = 2 tau sin(tau (x - c))
            g[0] += r * 2.0 * tau * std::sin(tau * (x[0] - f.centers[i][0]));
            g[1] += r * 2.0 * tau * std::sin(tau * (x[1] - f.centers[i][1]));
          }
          return g;
        } else {
          return Vec::Constant(1, f.fn.grad(x[0]));
        }
      },
      *family_);
}

double TargetPair::u1(VecRef x) const {
  check_dim(x);
  tally_->u1.fetch_add(1, std::memory_order_relaxed);
  return raw_u1(x) + u1_offset_;
}

Vec TargetPair::grad_u1(VecRef x) const {
  check_dim(x);
  tally_->grad_u1.fetch_add(1, std::memory_order_relaxed);
  return raw_grad_u1(x);
}

std::pair<double, double> TargetPair::eval_potentials(VecRef x) const {
  check_dim(x);
  return {u0(x), u1(x)};
}

double TargetPair::vanilla_variance_exact() const {
  const auto* spec = mixture();
  if (spec == nullptr || domain_.kind != DomainKind::kFullSpace) {
    throw std::invalid_argument("vanilla_variance_exact: only Gaussian mixtures are supported");
  }
  // E0[(rho1/rho0)^2] = sum_ij w_i w_j prod_k int N_i N_j / N(0,1)
  const std::size_t k = spec->weights.size();
  std::vector<double> logs;
  logs.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = std::log(spec->weights[i]) + std::log(spec->weights[j]);
      for (int c = 0; c < dim_; ++c) {
        acc += log_ratio_integral_1d(spec->means[i][c], spec->variances[i][c], spec->means[j][c],
                                     spec->variances[j][c]);
      }
      logs.push_back(acc);
    }
  }
  const double log_m2 = log_sum_exp(logs) - 2.0 * u1_offset_;
  if (!std::isfinite(log_m2)) return kInf;
  const double z1 = std::exp(-u1_offset_);
  return std::exp(log_m2) - z1 * z1;
}

// ---------------------------------------------------------------------------
// Sampling

Vec sample_base_one(const TargetPair& tp, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, index, StreamPurpose::kBase);
  Vec x(tp.dim());
  if (tp.domain().kind == DomainKind::kTorus) {
    for (int i = 0; i < tp.dim(); ++i) x[i] = rng.uniform();
  } else {
    for (int i = 0; i < tp.dim(); ++i) x[i] = rng.normal();
  }
  return x;
}

std::vector<Vec> sample_base(const TargetPair& tp, std::size_t n, std::uint64_t seed) {
  std::vector<Vec> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sample_base_one(tp, seed, i);
  return out;
}

}  // namespace neis
