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

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "neis/targets.hpp"

namespace neis {

enum class FlowKind : std::uint32_t {
  kGenericMlp = 1,
  kGradientMlp = 2,
  kGenericLinear = 3,
  kTwoParamFunnel = 4,
  kConstant = 5,
  kLinearFixed = 6,
  kRadialMixture = 7,
  kGridGradient = 8,
};

std::string to_string(FlowKind kind);
FlowKind flow_kind_from_string(const std::string& name);

// Bit mask selecting which FlowEval fields to fill.
enum Need : unsigned {
  kNeedB = 1u,
  kNeedJac = 2u,
  kNeedDiv = 4u,
  kNeedGradDiv = 8u,
  kNeedDthetaB = 16u,
  kNeedDthetaDiv = 32u,
  kNeedAll = 63u,
};

struct FlowEval {
  Vec b;
  Mat jac_b;  // jac_b(i, j) = d b_i / d x_j
  double div_b = 0.0;
  Vec grad_div_b;
  Mat dtheta_b;  // d x N_p
  Vec dtheta_div_b;
  unsigned filled = 0;

  bool has(unsigned mask) const { return (filled & mask) == mask; }
};

// Real trigonometric potential on the unit torus,
// V(x) = Re sum_j coef_j exp(2 pi i (kx_j x_1 + ky_j x_2)).
struct TorusModes {
  std::vector<int> kx;
  std::vector<int> ky;
  std::vector<std::complex<double>> coef;
  int kmax = 0;

  double value(VecRef x) const;
};

// One isotropic radial term c (2 s^2)^{-d/2} G(|y|^2 / (2 s^2)) y, y = x - mu.
struct RadialTerm {
  double coef;
  double sigma2;
  Vec mean;
};

// Parametric velocity field b_theta, optionally multiplied by a fixed scale.
// Immutable; with_theta / with_scale return modified copies.
class FlowField {
 public:
  // Networks have one hidden layer of `width` softplus units (layers = 2).
  static FlowField generic_mlp(int dim, int width, std::uint64_t seed, int layers = 2);
  static FlowField gradient_mlp(int dim, int width, std::uint64_t seed, int layers = 2);
  static FlowField generic_linear(int dim, std::uint64_t seed);
  static FlowField two_param_funnel(int dim, double alpha = 2.0, double beta = 2.0);
  static FlowField constant(const Vec& v);
  // b = s * lambda * x + v with the single parameter s (initially 1).
  static FlowField linear_fixed(const Mat& lambda, const Vec& v);
  static FlowField radial_mixture(const GaussMixSpec& spec);
  static FlowField grid_gradient(std::shared_ptr<const TorusModes> modes);

  FlowKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int layers() const { return layers_; }
  int width() const { return width_; }
  int n_params() const { return static_cast<int>(theta_.size()); }
  const Vec& theta() const { return theta_; }
  double scale() const { return scale_; }

  FlowField with_theta(const Vec& theta) const;
  FlowField with_scale(double scale) const;

  // Fills the fields selected by `need` into `out`, reusing its storage.
  void eval(VecRef x, unsigned need, FlowEval& out) const;
  FlowEval eval(VecRef x, unsigned need) const;
  Vec velocity(VecRef x) const;

  // Fixed data of LinearFixed fields.
  const Mat& linear_matrix() const { return lambda_; }
  const Vec& linear_offset() const { return offset_; }
  const std::vector<RadialTerm>& radial_terms() const { return radial_; }
  const std::shared_ptr<const TorusModes>& torus_modes() const { return modes_; }

 private:
  FlowField(FlowKind kind, int dim) : kind_(kind), dim_(dim) {}

  void eval_gradient_mlp(VecRef x, unsigned need, FlowEval& out) const;
  void eval_generic_mlp(VecRef x, unsigned need, FlowEval& out) const;
  void eval_generic_linear(VecRef x, unsigned need, FlowEval& out) const;
  void eval_two_param_funnel(VecRef x, unsigned need, FlowEval& out) const;
  void eval_linear_fixed(VecRef x, unsigned need, FlowEval& out) const;
  void eval_radial(VecRef x, unsigned need, FlowEval& out) const;
  void eval_grid(VecRef x, unsigned need, FlowEval& out) const;

  FlowKind kind_;
  int dim_;
  int layers_ = 0;
  int width_ = 0;
  Vec theta_;
  double scale_ = 1.0;
  Mat lambda_;
  Vec offset_;
  std::vector<RadialTerm> radial_;
  std::shared_ptr<const TorusModes> modes_;
};

// Zero-variance linear field for a Gaussian target N(mean, diag(variances)).
// Throws std::invalid_argument when a unit variance meets a nonzero mean.
FlowField gaussian_linear_flow(const Vec& variances, const Vec& mean);

// Parameter file: "NEISFLOW", version, kind, dim, layers, width, n_params,
// scale, extra-count, then theta and extra data, all little-endian.
void save_flow(const FlowField& f, const std::string& path);
FlowField load_flow(const std::string& path);

double softplus(double z);
double sigmoid(double z);

}  // namespace neis
