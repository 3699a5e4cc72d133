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

#include "neis/flows.hpp"

#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "neis/rng.hpp"
#include "neis/special.hpp"

namespace neis {

double softplus(double z) { return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::kGenericMlp: return "generic_mlp";
    case FlowKind::kGradientMlp: return "gradient_mlp";
    case FlowKind::kGenericLinear: return "generic_linear";
    case FlowKind::kTwoParamFunnel: return "two_param_funnel";
    case FlowKind::kConstant: return "constant";
    case FlowKind::kLinearFixed: return "linear_fixed";
    case FlowKind::kRadialMixture: return "radial_mixture";
    case FlowKind::kGridGradient: return "grid_gradient";
  }
  return "unknown";
}

FlowKind flow_kind_from_string(const std::string& name) {
  for (auto k : {FlowKind::kGenericMlp, FlowKind::kGradientMlp, FlowKind::kGenericLinear,
                 FlowKind::kTwoParamFunnel, FlowKind::kConstant, FlowKind::kLinearFixed,
                 FlowKind::kRadialMixture, FlowKind::kGridGradient}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown flow kind '" + name + "'");
}

double TorusModes::value(VecRef x) const {
  const double tau = 2.0 * std::numbers::pi;
  double v = 0.0;
  for (std::size_t j = 0; j < coef.size(); ++j) {
    const double ph = tau * (kx[j] * x[0] + ky[j] * x[1]);
    v += coef[j].real() * std::cos(ph) - coef[j].imag() * std::sin(ph);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

void fill_uniform(Vec& theta, Eigen::Index from, Eigen::Index count, double bound, CounterRng& rng) {
  for (Eigen::Index i = 0; i < count; ++i) theta[from + i] = bound * (2.0 * rng.uniform() - 1.0);
}

void check_layers(int layers) {
  if (layers != 2) throw std::invalid_argument("only two-layer networks are supported");
}

}  // namespace

FlowField FlowField::gradient_mlp(int dim, int width, std::uint64_t seed, int layers) {
  check_layers(layers);
  if (dim < 1 || width < 1) throw std::invalid_argument("gradient_mlp: bad shape");
  FlowField f(FlowKind::kGradientMlp, dim);
  f.layers_ = layers;
  f.width_ = width;
  const int m = width;
  f.theta_ = Vec::Zero(m * dim + 2 * m);
  CounterRng rng(seed, 0, StreamPurpose::kInit);
  fill_uniform(f.theta_, 0, m * dim, 1.0 / std::sqrt(dim), rng);
  fill_uniform(f.theta_, m * dim + m, m, 1.0 / std::sqrt(m), rng);
  return f;
}

FlowField FlowField::generic_mlp(int dim, int width, std::uint64_t seed, int layers) {
  check_layers(layers);
  if (dim < 1 || width < 1) throw std::invalid_argument("generic_mlp: bad shape");
  FlowField f(FlowKind::kGenericMlp, dim);
  f.layers_ = layers;
  f.width_ = width;
  const int m = width;
  f.theta_ = Vec::Zero(2 * m * dim + m + dim);
  CounterRng rng(seed, 0, StreamPurpose::kInit);
  fill_uniform(f.theta_, 0, m * dim, 1.0 / std::sqrt(dim), rng);
  fill_uniform(f.theta_, m * dim + m, dim * m, 1.0 / std::sqrt(m), rng);
  return f;
}

FlowField FlowField::generic_linear(int dim, std::uint64_t seed) {
  FlowField f(FlowKind::kGenericLinear, dim);
  f.theta_ = Vec::Zero(dim * dim + dim);
  CounterRng rng(seed, 0, StreamPurpose::kInit);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < dim * dim; ++i) f.theta_[i] = sd * rng.normal();
  return f;
}

FlowField FlowField::two_param_funnel(int dim, double alpha, double beta) {
  if (dim < 2) throw std::invalid_argument("two_param_funnel: need dim >= 2");
  FlowField f(FlowKind::kTwoParamFunnel, dim);
  f.theta_ = Vec{{alpha, beta}};
  return f;
}

FlowField FlowField::constant(const Vec& v) {
  FlowField f(FlowKind::kConstant, static_cast<int>(v.size()));
  f.theta_ = v;
  return f;
}

FlowField FlowField::linear_fixed(const Mat& lambda, const Vec& v) {
  if (lambda.rows() != lambda.cols() || lambda.rows() != v.size()) {
    throw std::invalid_argument("linear_fixed: shape mismatch");
  }
  FlowField f(FlowKind::kLinearFixed, static_cast<int>(v.size()));
  f.theta_ = Vec::Ones(1);
  f.lambda_ = lambda;
  f.offset_ = v;
  return f;
}

FlowField FlowField::radial_mixture(const GaussMixSpec& spec) {
  spec.validate();
  const int d = spec.dim();
  if (d < 2) throw std::invalid_argument("radial_mixture: dimension must be at least 2");
  if (!spec.isotropic()) throw std::invalid_argument("radial_mixture: components must be isotropic");
  for (std::size_t i = 0; i < spec.means.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.means.size(); ++j) {
      if ((spec.means[i] - spec.means[j]).norm() == 0.0) {
        throw std::invalid_argument("radial_mixture: means must be distinct");
      }
    }
  }
  FlowField f(FlowKind::kRadialMixture, d);
  const double norm = 1.0 / (2.0 * std::pow(std::numbers::pi, 0.5 * d));
  for (std::size_t i = 0; i < spec.weights.size(); ++i) {
    f.radial_.push_back({spec.weights[i] * norm, spec.variances[i][0], spec.means[i]});
  }
  f.radial_.push_back({-norm, 1.0, Vec::Zero(d)});
  f.theta_ = Vec(0);
  return f;
}

FlowField FlowField::grid_gradient(std::shared_ptr<const TorusModes> modes) {
  if (!modes) throw std::invalid_argument("grid_gradient: no modes");
  FlowField f(FlowKind::kGridGradient, 2);
  f.modes_ = std::move(modes);
  f.theta_ = Vec(0);
  return f;
}

FlowField FlowField::with_theta(const Vec& theta) const {
  if (theta.size() != theta_.size()) throw std::invalid_argument("with_theta: wrong parameter count");
  FlowField f = *this;
  f.theta_ = theta;
  return f;
}

FlowField FlowField::with_scale(double scale) const {
  FlowField f = *this;
  f.scale_ = scale;
  return f;
}

FlowField gaussian_linear_flow(const Vec& variances, const Vec& mean) {
  const auto d = variances.size();
  if (mean.size() != d) throw std::invalid_argument("gaussian_linear_flow: shape mismatch");
  Mat lambda = Mat::Zero(d, d);
  Vec v = Vec::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(variances[i] > 0.0)) throw std::invalid_argument("gaussian_linear_flow: variance must be positive");
    const double sd = std::sqrt(variances[i]);
    lambda(i, i) = -std::log(sd);
    if (variances[i] == 1.0) {
      if (mean[i] != 0.0) throw std::invalid_argument("gaussian_linear_flow: unit variance with nonzero mean");
      continue;
    }
    v[i] = -lambda(i, i) * mean[i] / (1.0 - sd);
  }
  return FlowField::linear_fixed(lambda, v);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Kinds that overwrite every requested output skip the zero fill.
void prepare(FlowEval& out, int d, int np, unsigned need, bool zero) {
  out.filled = need;
  if (!zero) {
    if (need & kNeedB) out.b.resize(d);
    if (need & kNeedJac) out.jac_b.resize(d, d);
    if (need & kNeedGradDiv) out.grad_div_b.resize(d);
    if (need & kNeedDthetaB) out.dtheta_b.resize(d, np);
    if (need & kNeedDthetaDiv) out.dtheta_div_b.resize(np);
    return;
  }
  if (need & kNeedB) out.b.setZero(d);
  if (need & kNeedJac) out.jac_b.setZero(d, d);
  if (need & kNeedDiv) out.div_b = 0.0;
  if (need & kNeedGradDiv) out.grad_div_b.setZero(d);
  if (need & kNeedDthetaB) out.dtheta_b.setZero(d, np);
  if (need & kNeedDthetaDiv) out.dtheta_div_b.setZero(np);
}

void apply_scale(FlowEval& out, double s, unsigned need) {
  if (s == 1.0) return;
  if (need & kNeedB) out.b *= s;
  if (need & kNeedJac) out.jac_b *= s;
  if (need & kNeedDiv) out.div_b *= s;
  if (need & kNeedGradDiv) out.grad_div_b *= s;
  if (need & kNeedDthetaB) out.dtheta_b *= s;
  if (need & kNeedDthetaDiv) out.dtheta_div_b *= s;
}

}  // namespace

FlowEval FlowField::eval(VecRef x, unsigned need) const {
  FlowEval out;
  eval(x, need, out);
  return out;
}

Vec FlowField::velocity(VecRef x) const {
  FlowEval out;
  eval(x, kNeedB, out);
  return out.b;
}

void FlowField::eval(VecRef x, unsigned need, FlowEval& out) const {
  if (x.size() != dim_) throw std::invalid_argument("eval_flow: dimension mismatch");
  prepare(out, dim_, n_params(), need, kind_ != FlowKind::kGradientMlp);
  switch (kind_) {
    case FlowKind::kGradientMlp: eval_gradient_mlp(x, need, out); break;
    case FlowKind::kGenericMlp: eval_generic_mlp(x, need, out); break;
    case FlowKind::kGenericLinear: eval_generic_linear(x, need, out); break;
    case FlowKind::kTwoParamFunnel: eval_two_param_funnel(x, need, out); break;
    case FlowKind::kConstant:
      if (need & kNeedB) out.b = theta_;
      if (need & kNeedDthetaB) out.dtheta_b.setIdentity();
      break;
    case FlowKind::kLinearFixed: eval_linear_fixed(x, need, out); break;
    case FlowKind::kRadialMixture: eval_radial(x, need, out); break;
    case FlowKind::kGridGradient: eval_grid(x, need, out); break;
  }
  apply_scale(out, scale_, need);
}

// V(x) = sum_k a_k softplus(w_k . x + c_k); theta = [W (m x d, row-major), c, a].
void FlowField::eval_gradient_mlp(VecRef x, unsigned need, FlowEval& out) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int d = dim_;
  const int m = width_;
  const Eigen::Map<const RowMat> w(theta_.data(), m, d);
  const Eigen::Map<const Vec> c(theta_.data() + m * d, m);
  const Eigen::Map<const Vec> a(theta_.data() + m * d + m, m);
  const Eigen::ArrayXd z = (w * x + c).array();
  const Eigen::ArrayXd s1 = 1.0 / (1.0 + (-z).exp());
  const Eigen::ArrayXd s2 = s1 * (1.0 - s1);
  const Eigen::ArrayXd wn2 = w.rowwise().squaredNorm().array();
  const Eigen::ArrayXd as2 = a.array() * s2;
  if (need & kNeedB) out.b.noalias() = w.transpose() * (a.array() * s1).matrix();
  if (need & kNeedDiv) out.div_b = (as2 * wn2).sum();
  if (need & kNeedJac) out.jac_b.noalias() = w.transpose() * as2.matrix().asDiagonal() * w;
  if (!(need & (kNeedGradDiv | kNeedDthetaB | kNeedDthetaDiv))) return;
  const Eigen::ArrayXd s3 = s2 * (1.0 - 2.0 * s1);
  if (need & kNeedGradDiv) out.grad_div_b.noalias() = w.transpose() * (a.array() * s3 * wn2).matrix();
  for (int k = 0; k < m; ++k) {
    const double* wk = theta_.data() + k * d;
    const double ak = a[k];
    Eigen::Map<const Vec> wv(wk, d);
    if (need & kNeedDthetaB) {
      for (int j = 0; j < d; ++j) {
        auto col = out.dtheta_b.col(k * d + j);
        col.noalias() = (as2[k] * x[j]) * wv;
        col[j] += ak * s1[k];
      }
      out.dtheta_b.col(m * d + k).noalias() = as2[k] * wv;
      out.dtheta_b.col(m * d + m + k).noalias() = s1[k] * wv;
    }
    if (need & kNeedDthetaDiv) {
      for (int j = 0; j < d; ++j) {
        out.dtheta_div_b[k * d + j] = ak * (s3[k] * x[j] * wn2[k] + 2.0 * s2[k] * wk[j]);
      }
      out.dtheta_div_b[m * d + k] = ak * s3[k] * wn2[k];
      out.dtheta_div_b[m * d + m + k] = s2[k] * wn2[k];
    }
  }
}

// b = W2 softplus(W1 x + c1) + c2; theta = [W1 (m x d), c1, W2 (d x m), c2], row-major.
void FlowField::eval_generic_mlp(VecRef x, unsigned need, FlowEval& out) const {
  const int d = dim_;
  const int m = width_;
  const double* w1 = theta_.data();
  const double* c1 = w1 + m * d;
  const double* w2 = c1 + m;
  const double* c2 = w2 + d * m;
  const int o_c1 = m * d;
  const int o_w2 = o_c1 + m;
  const int o_c2 = o_w2 + d * m;
  if (need & kNeedB) {
    for (int i = 0; i < d; ++i) out.b[i] = c2[i];
  }
  for (int k = 0; k < m; ++k) {
    const double* w1k = w1 + k * d;
    double z = c1[k];
    for (int j = 0; j < d; ++j) z += w1k[j] * x[j];
    const double h = softplus(z);
    const double s1 = sigmoid(z);
    const double s2 = s1 * (1.0 - s1);
    double sk = 0.0;  // sum_i W2_ik W1_ki
    for (int i = 0; i < d; ++i) sk += w2[i * m + k] * w1k[i];
    if (need & kNeedB) {
      for (int i = 0; i < d; ++i) out.b[i] += w2[i * m + k] * h;
    }
    if (need & kNeedJac) {
      for (int i = 0; i < d; ++i) {
        const double f = w2[i * m + k] * s1;
        for (int j = 0; j < d; ++j) out.jac_b(i, j) += f * w1k[j];
      }
    }
    if (need & kNeedDiv) out.div_b += s1 * sk;
    if (need & kNeedGradDiv) {
      for (int j = 0; j < d; ++j) out.grad_div_b[j] += s2 * sk * w1k[j];
    }
    if (need & kNeedDthetaB) {
      for (int i = 0; i < d; ++i) {
        const double f = w2[i * m + k] * s1;
        for (int j = 0; j < d; ++j) out.dtheta_b(i, k * d + j) = f * x[j];
        out.dtheta_b(i, o_c1 + k) = f;
        out.dtheta_b(i, o_w2 + i * m + k) = h;
      }
    }
    if (need & kNeedDthetaDiv) {
      for (int j = 0; j < d; ++j) {
        out.dtheta_div_b[k * d + j] = s2 * sk * x[j] + s1 * w2[j * m + k];
      }
      out.dtheta_div_b[o_c1 + k] = s2 * sk;
      for (int i = 0; i < d; ++i) out.dtheta_div_b[o_w2 + i * m + k] = s1 * w1k[i];
    }
  }
  if (need & kNeedDthetaB) {
    for (int i = 0; i < d; ++i) out.dtheta_b(i, o_c2 + i) = 1.0;
  }
}

// b = W x + c; theta = [W (d x d, row-major), c].
void FlowField::eval_generic_linear(VecRef x, unsigned need, FlowEval& out) const {
  const int d = dim_;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      theta_.data(), d, d);
  Eigen::Map<const Vec> c(theta_.data() + d * d, d);
  if (need & kNeedB) out.b.noalias() = w * x + c;
  if (need & kNeedJac) out.jac_b = w;
  if (need & kNeedDiv) out.div_b = w.trace();
  if (need & kNeedDthetaB) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) out.dtheta_b(i, i * d + j) = x[j];
      out.dtheta_b(i, d * d + i) = 1.0;
    }
  }
  if (need & kNeedDthetaDiv) {
    for (int i = 0; i < d; ++i) out.dtheta_div_b[i * d + i] = 1.0;
  }
}

// b = -(beta, alpha x_2, ..., alpha x_d); theta = (alpha, beta).
void FlowField::eval_two_param_funnel(VecRef x, unsigned need, FlowEval& out) const {
  const int d = dim_;
  const double alpha = theta_[0];
  const double beta = theta_[1];
  if (need & kNeedB) {
    out.b[0] = -beta;
    for (int i = 1; i < d; ++i) out.b[i] = -alpha * x[i];
  }
  if (need & kNeedJac) {
    for (int i = 1; i < d; ++i) out.jac_b(i, i) = -alpha;
  }
  if (need & kNeedDiv) out.div_b = -(d - 1) * alpha;
  if (need & kNeedDthetaB) {
    for (int i = 1; i < d; ++i) out.dtheta_b(i, 0) = -x[i];
    out.dtheta_b(0, 1) = -1.0;
  }
  if (need & kNeedDthetaDiv) out.dtheta_div_b[0] = -(d - 1);
}

void FlowField::eval_linear_fixed(VecRef x, unsigned need, FlowEval& out) const {
  const double s = theta_[0];
  if (need & kNeedB) out.b.noalias() = s * (lambda_ * x) + offset_;
  if (need & kNeedJac) out.jac_b = s * lambda_;
  if (need & kNeedDiv) out.div_b = s * lambda_.trace();
  if (need & kNeedDthetaB) out.dtheta_b.col(0).noalias() = lambda_ * x;
  if (need & kNeedDthetaDiv) out.dtheta_div_b[0] = lambda_.trace();
}

void FlowField::eval_radial(VecRef x, unsigned need, FlowEval& out) const {
  const int d = dim_;
  const double a = 0.5 * d;
  for (const auto& term : radial_) {
    const Vec y = x - term.mean;
    const double two_s2 = 2.0 * term.sigma2;
    const double u = y.squaredNorm() / two_s2;
    const double pre = term.coef * std::pow(two_s2, -a);
    if (need & kNeedB) out.b.noalias() += (pre * special::scaled_lower_gamma(a, u)) * y;
    if (need & kNeedJac) {
      const double g = special::scaled_lower_gamma(a, u);
      const double gp = special::scaled_lower_gamma_derivative(a, u);
      out.jac_b.diagonal().array() += pre * g;
      out.jac_b.noalias() += (pre * gp / term.sigma2) * y * y.transpose();
    }
    // d G + 2 u G' = 2 e^{-u}, so each term's divergence is a Gaussian density.
    const double e = std::exp(-u);
    if (need & kNeedDiv) out.div_b += 2.0 * pre * e;
    if (need & kNeedGradDiv) out.grad_div_b.noalias() += (-2.0 * pre * e / term.sigma2) * y;
  }
}

void FlowField::eval_grid(VecRef x, unsigned need, FlowEval& out) const {
  const double tau = 2.0 * std::numbers::pi;
  const TorusModes& md = *modes_;
  const int km = md.kmax;
  // e^{i tau k x} for k in [-km, km] by repeated multiplication
  thread_local std::vector<std::complex<double>> ex, ey;
  ex.resize(2 * km + 1);
  ey.resize(2 * km + 1);
  const std::complex<double> bx = std::polar(1.0, tau * x[0]);
  const std::complex<double> by = std::polar(1.0, tau * x[1]);
  ex[km] = ey[km] = 1.0;
  for (int k = 1; k <= km; ++k) {
    ex[km + k] = ex[km + k - 1] * bx;
    ey[km + k] = ey[km + k - 1] * by;
    ex[km - k] = std::conj(ex[km + k]);
    ey[km - k] = std::conj(ey[km + k]);
  }
  double b0 = 0.0, b1 = 0.0, j00 = 0.0, j01 = 0.0, j11 = 0.0, g0 = 0.0, g1 = 0.0;
  for (std::size_t j = 0; j < md.coef.size(); ++j) {
    const std::complex<double> z = md.coef[j] * ex[km + md.kx[j]] * ey[km + md.ky[j]];
    const double kx = tau * md.kx[j];
    const double ky = tau * md.ky[j];
    // gradient of Re z picks up i k: Re(i k z) = -k Im z
    b0 -= kx * z.imag();
    b1 -= ky * z.imag();
    j00 -= kx * kx * z.real();
    j01 -= kx * ky * z.real();
    j11 -= ky * ky * z.real();
    const double k2 = kx * kx + ky * ky;
    g0 += k2 * kx * z.imag();
    g1 += k2 * ky * z.imag();
  }
  if (need & kNeedB) out.b << b0, b1;
  if (need & kNeedJac) out.jac_b << j00, j01, j01, j11;
  if (need & kNeedDiv) out.div_b = j00 + j11;
  if (need & kNeedGradDiv) out.grad_div_b << g0, g1;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'N', 'E', 'I', 'S', 'F', 'L', 'O', 'W'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("flow file truncated");
  return v;
}

}  // namespace

void save_flow(const FlowField& f, const std::string& path) {
  if (f.kind() == FlowKind::kRadialMixture || f.kind() == FlowKind::kGridGradient) {
    throw std::invalid_argument("save_flow: analytic fields are rebuilt from their targets, not saved");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(kMagic, 8);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.kind()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.layers()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.width()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(f.n_params()));
  put<double>(os, f.scale());
  std::vector<double> extra;
  if (f.kind() == FlowKind::kLinearFixed) {
    extra.assign(f.linear_matrix().data(), f.linear_matrix().data() + f.linear_matrix().size());
    extra.insert(extra.end(), f.linear_offset().data(), f.linear_offset().data() + f.linear_offset().size());
  }
  put<std::uint64_t>(os, extra.size());
  for (Eigen::Index i = 0; i < f.theta().size(); ++i) put<double>(os, f.theta()[i]);
  for (double v : extra) put<double>(os, v);
  if (!os) throw std::runtime_error("write failed: " + path);
}

FlowField load_flow(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a flow file: " + path);
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported flow file version");
  const auto kind = static_cast<FlowKind>(get<std::uint32_t>(is));
  const int dim = static_cast<int>(get<std::uint32_t>(is));
  const int layers = static_cast<int>(get<std::uint32_t>(is));
  const int width = static_cast<int>(get<std::uint32_t>(is));
  const auto np = get<std::uint64_t>(is);
  const double scale = get<double>(is);
  const auto n_extra = get<std::uint64_t>(is);
  Vec theta(static_cast<Eigen::Index>(np));
  for (auto& v : theta) v = get<double>(is);
  std::vector<double> extra(n_extra);
  for (auto& v : extra) v = get<double>(is);

  FlowField f = [&] {
    switch (kind) {
      case FlowKind::kGenericMlp: return FlowField::generic_mlp(dim, width, 0, layers);
      case FlowKind::kGradientMlp: return FlowField::gradient_mlp(dim, width, 0, layers);
      case FlowKind::kGenericLinear: return FlowField::generic_linear(dim, 0);
      case FlowKind::kTwoParamFunnel: return FlowField::two_param_funnel(dim);
      case FlowKind::kConstant: return FlowField::constant(Vec::Zero(dim));
      case FlowKind::kLinearFixed: {
        if (extra.size() != static_cast<std::size_t>(dim * dim + dim)) {
          throw std::runtime_error("flow file: bad linear data");
        }
        Mat lambda = Eigen::Map<const Mat>(extra.data(), dim, dim);
        Vec v = Eigen::Map<const Vec>(extra.data() + dim * dim, dim);
        return FlowField::linear_fixed(lambda, v);
      }
      default: throw std::runtime_error("flow file: unsupported kind");
    }
  }();
  return f.with_theta(theta).with_scale(scale);
}

}  // namespace neis
