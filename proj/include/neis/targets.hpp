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

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace neis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

// Exact tallies of target-potential queries. Shared by copies of a TargetPair.
struct QueryTally {
  std::atomic<std::uint64_t> u1{0};
  std::atomic<std::uint64_t> grad_u1{0};

  void reset() {
    u1.store(0);
    grad_u1.store(0);
  }
};

struct QueryCounts {
  std::uint64_t u1 = 0;
  std::uint64_t grad_u1 = 0;

  QueryCounts operator-(const QueryCounts& o) const { return {u1 - o.u1, grad_u1 - o.grad_u1}; }
};

// Diagonal-covariance Gaussian mixture.
struct GaussMixSpec {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Vec> variances;

  // Throws std::invalid_argument unless weights sum to one, every variance
  // is positive and all shapes agree.
  void validate() const;
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  // True when each component has variance sigma_i^2 * I.
  bool isotropic() const;

  static GaussMixSpec asymmetric_two_mode_2d();
  static GaussMixSpec symmetric_four_mode_10d();
};

enum class DomainKind { kFullSpace, kBall, kTorus };

struct Domain {
  DomainKind kind = DomainKind::kFullSpace;
  double radius = 0.0;  // kBall only, centered at the origin
};

// One-dimensional target given by callables. The normalizer is computed by
// adaptive quadrature at construction.
struct Custom1D {
  std::string name;
  std::function<double(double)> u;
  std::function<double(double)> grad;
};

// Base potential U0 plus target potential U1.
//
// The base is the standard Gaussian on R^d, except on the unit torus where it
// is the uniform density (U0 = 0). Benchmark targets are normalized so that
// Z1 = 1. Every call to u1()/grad_u1() increments the shared tally.
class TargetPair {
 public:
  static TargetPair gauss_mix(const GaussMixSpec& spec, std::string name = "gaussmix");
  static TargetPair gauss_mix_2d();
  static TargetPair gauss_mix_10d();
  static TargetPair funnel_10d(double radius = 25.0);
  static TargetPair torus_mix_2d();
  // Normalized Gaussian N(mean, diag(variances)).
  static TargetPair gaussian(const Vec& variances, const Vec& mean);
  static TargetPair custom_1d(Custom1D target);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const Domain& domain() const { return domain_; }
  // log Z1 when it is known (0 for the normalized benchmarks).
  std::optional<double> exact_log_z1() const { return exact_log_z1_; }

  double u0(VecRef x) const;
  Vec grad_u0(VecRef x) const;
  // +infinity outside the domain.
  double u1(VecRef x) const;
  // Throws std::domain_error outside the domain interior.
  Vec grad_u1(VecRef x) const;

  // Returns (U0(x), U1(x)); throws std::invalid_argument on a size mismatch.
  std::pair<double, double> eval_potentials(VecRef x) const;
  Vec eval_grad_u1(VecRef x) const { return grad_u1(x); }

  bool inside(VecRef x) const;

  // Mixture description, when the target is a Gaussian mixture.
  const GaussMixSpec* mixture() const;

  // Copy whose U1 is shifted by a constant: Z1 is multiplied by exp(-c).
  TargetPair with_u1_offset(double c) const;

  QueryTally& tally() const { return *tally_; }
  QueryCounts counts() const { return {tally_->u1.load(), tally_->grad_u1.load()}; }

  // Variance of the vanilla estimator exp(U0 - U1) under rho0, computed from
  // closed-form Gaussian integrals. Mixtures only; +inf when it diverges.
  double vanilla_variance_exact() const;

 private:
  struct Funnel {
    double radius;
  };
  struct Torus {
    std::array<Vec, 3> centers;
    double log_norm;
  };
  struct Custom {
    Custom1D fn;
    double log_norm;
  };
  using Family = std::variant<GaussMixSpec, Funnel, Torus, Custom>;

  TargetPair(std::string name, int dim, Domain domain, Family family, std::optional<double> log_z1);

  void check_dim(VecRef x) const;
  double raw_u1(VecRef x) const;
  Vec raw_grad_u1(VecRef x) const;

  std::string name_;
  int dim_;
  Domain domain_;
  std::shared_ptr<const Family> family_;
  std::optional<double> exact_log_z1_;
  double u1_offset_ = 0.0;
  std::shared_ptr<QueryTally> tally_;
};

// n i.i.d. draws from rho0, one counter-based stream per sample index.
std::vector<Vec> sample_base(const TargetPair& tp, std::size_t n, std::uint64_t seed);

// Draw number `index` of sample_base(tp, *, seed).
Vec sample_base_one(const TargetPair& tp, std::uint64_t seed, std::uint64_t index);

}  // namespace neis
