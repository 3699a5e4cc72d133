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

#include "neis/zerovar.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>

#include "neis/dynamics.hpp"
#include "neis/parallel.hpp"

namespace neis {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct FftwPlan {
  fftw_plan p = nullptr;
  ~FftwPlan() {
    if (p) fftw_destroy_plan(p);
  }
};

struct FftwBuffer {
  void* ptr;
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
};

int signed_freq(int i, int n) { return i < n / 2 ? i : i - n; }

}  // namespace

TorusPoissonSolution torus_poisson_solve(const Mat& rhs, double prune) {
  const int n = static_cast<int>(rhs.rows());
  if (n < 4 || rhs.cols() != n || (n & (n - 1)) != 0) {
    throw std::invalid_argument("torus_poisson_solve: grid must be square with a power-of-two side");
  }
  if (std::abs(rhs.mean()) > 1e-8) throw std::invalid_argument("torus_poisson_solve: source has nonzero mean");
  const int nh = n / 2 + 1;
  FftwBuffer real_buf(sizeof(double) * n * n);
  FftwBuffer spec_buf(sizeof(fftw_complex) * n * nh);
  auto* in = static_cast<double*>(real_buf.ptr);
  auto* spec = static_cast<fftw_complex*>(spec_buf.ptr);
  FftwPlan fwd, bwd;
  fwd.p = fftw_plan_dft_r2c_2d(n, n, in, spec, FFTW_ESTIMATE);
  bwd.p = fftw_plan_dft_c2r_2d(n, n, spec, in, FFTW_ESTIMATE);

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) in[i * n + j] = rhs(i, j);
  fftw_execute(fwd.p);

  // V-hat = -rhs-hat / (4 pi^2 |k|^2); zero and Nyquist modes dropped
  std::vector<std::complex<double>> vhat(static_cast<std::size_t>(n) * nh, 0.0);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const int k1 = signed_freq(i, n);
    for (int j = 0; j < nh; ++j) {
      const int k2 = j;
      if ((k1 == 0 && k2 == 0) || i == n / 2 || j == n / 2) continue;
      const std::complex<double> r(spec[i * nh + j][0], spec[i * nh + j][1]);
      const double k2norm = kTau * kTau * (k1 * k1 + k2 * k2);
      vhat[i * nh + j] = -r / k2norm;
      peak = std::max(peak, std::abs(vhat[i * nh + j]) * (k2 > 0 ? 2.0 : 1.0));
    }
  }

  auto modes = std::make_shared<TorusModes>();
  const double norm = 1.0 / (static_cast<double>(n) * n);
  for (int i = 0; i < n; ++i) {
    const int k1 = signed_freq(i, n);
    for (int j = 0; j < nh; ++j) {
      auto& c = vhat[i * nh + j];
      const double mult = j > 0 ? 2.0 : 1.0;
      if (std::abs(c) * mult <= prune * peak) {
        c = 0.0;
        continue;
      }
      modes->kx.push_back(k1);
      modes->ky.push_back(j);
      modes->coef.push_back(c * (mult * norm));
      modes->kmax = std::max({modes->kmax, std::abs(k1), j});
    }
  }

  TorusPoissonSolution sol;
  sol.n = n;
  sol.rhs = rhs;
  sol.v.resize(n, n);
  for (std::size_t k = 0; k < vhat.size(); ++k) {
    spec[k][0] = vhat[k].real();
    spec[k][1] = vhat[k].imag();
  }
  fftw_execute(bwd.p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sol.v(i, j) = in[i * n + j] * norm;

  // Laplacian of the retained modes against the source
  for (int i = 0; i < n; ++i) {
    const int k1 = signed_freq(i, n);
    for (int j = 0; j < nh; ++j) {
      const double k2norm = kTau * kTau * (k1 * k1 + j * j);
      const auto lap = -k2norm * vhat[i * nh + j];
      spec[i * nh + j][0] = lap.real();
      spec[i * nh + j][1] = lap.imag();
    }
  }
  fftw_execute(bwd.p);
  const double mean = rhs.mean();
  double res = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) res = std::max(res, std::abs(in[i * n + j] * norm - (rhs(i, j) - mean)));
  sol.residual = res;
  sol.modes = std::move(modes);
  return sol;
}

Mat torus_source(const TargetPair& tp, int n) {
  if (tp.domain().kind != DomainKind::kTorus) throw std::invalid_argument("torus_source: target is not on the torus");
  Mat g(n, n);
  Vec x(2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      x << static_cast<double>(i) / n, static_cast<double>(j) / n;
      g(i, j) = std::exp(-tp.u1(x)) - std::exp(-tp.u0(x));
    }
  }
  return g;
}

FlowField torus_zero_variance_flow(const TorusPoissonSolution& sol) {
  return FlowField::grid_gradient(sol.modes);
}

void write_grid_csv(const Mat& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.precision(17);
  const auto n = grid.rows();
  os << "i,j,x1,x2,value\n";
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < grid.cols(); ++j)
      os << i << ',' << j << ',' << static_cast<double>(i) / n << ',' << static_cast<double>(j) / grid.cols()
         << ',' << grid(i, j) << '\n';
}

// ---------------------------------------------------------------------------
// Transport time

TransportResult transport_time(const TargetPair& tp, const FlowField& f, VecRef x,
                               const TransportOptions& opts) {
  const int d = f.dim();
  if (x.size() != d || tp.dim() != d) throw std::invalid_argument("transport_time: dimension mismatch");
  const double h = 1.0 / opts.n_steps;
  const int max_steps = static_cast<int>(std::ceil(opts.t_max * opts.n_steps));
  TransportResult out;
  FlowEval ev;
  Rk4Work work;

  // y = [X, log J, Q0, Q1] with Q_k' = exp(-U_k(X)) J along direction dir
  auto make_rhs = [&](int dir) {
    return [&, dir](const Vec& y, Vec& dy) {
      dy.resize(d + 3);
      const auto xs = y.head(d);
      f.eval(xs, kNeedB | kNeedDiv, ev);
      dy.head(d) = dir * ev.b;
      dy[d] = dir * ev.div_b;
      const double u1 = tp.u1(xs);
      dy[d + 1] = std::exp(-tp.u0(xs) + y[d]);
      dy[d + 2] = std::isfinite(u1) ? std::exp(-u1 + y[d]) : 0.0;
      if (dy[d + 2] < 0.0 || std::isnan(dy[d + 2])) out.monotone = false;
    };
  };
  auto bad = [&](const Vec& y) { return !y.allFinite() || y.head(d).norm() > kBlowUp; };

  // backward masses of rho0 and rho1
  Vec y = Vec::Zero(d + 3);
  y.head(d) = x;
  {
    auto rhs = make_rhs(-1);
    double peak0 = 0.0, peak1 = 0.0;
    Vec dy;
    int s = 0;
    for (; s < max_steps; ++s) {
      rhs(y, dy);
      peak0 = std::max(peak0, dy[d + 1]);
      peak1 = std::max(peak1, dy[d + 2]);
      if (s >= opts.n_steps && dy[d + 1] <= opts.decay * peak0 && dy[d + 2] <= opts.decay * peak1) break;
      rk4_step(y, h, rhs, work);
      if (bad(y)) break;  // the tail beyond a blow-up carries no mass
    }
    if (s == max_steps) return out;
  }
  const double i0 = y[d + 1];
  const double i1_back = y[d + 2];
  if (!(i0 > 0.0)) return out;
  const double gap = i0 - i1_back;  // L(x, 0)
  const double tol = opts.tol * i0;
  if (std::abs(gap) <= tol) {
    out.kappa = 0.0;
    out.point = x;
    out.ok = true;
    return out;
  }
  // accumulate rho1 mass forward (gap > 0) or backward (gap < 0) from x
  const int dir = gap > 0.0 ? 1 : -1;
  const double target = std::abs(gap);
  auto rhs = make_rhs(dir);
  Vec z = Vec::Zero(d + 3);
  z.head(d) = x;
  Vec next;
  for (int s = 0; s < max_steps; ++s) {
    next = z;
    rk4_step(next, h, rhs, work);
    if (bad(next)) return out;
    if (next[d + 2] >= target) {
      // root of Q(tau) - target on (0, h], one RK4 step of length tau from z
      double lo = 0.0, hi = h;
      double g_lo = z[d + 2] - target;
      double tau = h * (target - z[d + 2]) / (next[d + 2] - z[d + 2]);
      Vec trial;
      Vec dy;
      for (int it = 0; it < 100; ++it) {
        trial = z;
        rk4_step(trial, tau, rhs, work);
        const double g = trial[d + 2] - target;
        if (std::abs(g) <= tol) break;
        if ((g < 0.0) == (g_lo < 0.0)) {
          lo = tau;
          g_lo = g;
        } else {
          hi = tau;
        }
        rhs(trial, dy);
        double cand = dy[d + 2] > 0.0 ? tau - g / dy[d + 2] : -1.0;
        if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
        tau = cand;
        if (hi - lo < 1e-15) break;
      }
      out.kappa = dir * (s * h + tau);
      out.point = trial.head(d);
      out.ok = std::abs(trial[d + 2] - target) <= std::max(tol, 1e-14);
      return out;
    }
    z = next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pushforward histogram checks

namespace {

double wrap01(double v) { return v - std::floor(v); }

// Probability of each bin under exp(-pot) (normalized), last entry the rest.
std::vector<double> line_bin_probabilities(const std::function<double(double)>& density,
                                           const HistogramSpec& hs) {
  std::vector<double> p(hs.bins + 1, 0.0);
  const double w = (hs.hi - hs.lo) / hs.bins;
  double inside = 0.0;
  for (int b = 0; b < hs.bins; ++b) {
    const double a = hs.lo + b * w;
    p[b] = boost::math::quadrature::gauss<double, 30>::integrate(density, a, a + w);
    inside += p[b];
  }
  p[hs.bins] = std::max(0.0, 1.0 - inside);
  return p;
}

std::vector<double> torus_bin_probabilities(const std::function<double(double, double)>& density, int bins) {
  const int sub = 8;
  std::vector<double> p(static_cast<std::size_t>(bins) * bins, 0.0);
  const double cell = 1.0 / bins;
  const double ds = cell / sub;
  double total = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      double acc = 0.0;
      for (int a = 0; a < sub; ++a)
        for (int b = 0; b < sub; ++b) acc += density(i * cell + (a + 0.5) * ds, j * cell + (b + 0.5) * ds);
      p[i * bins + j] = acc * ds * ds;
      total += p[i * bins + j];
    }
  for (auto& v : p) v /= total;
  return p;
}

std::size_t line_bin(double v, const HistogramSpec& hs) {
  if (!(v >= hs.lo && v < hs.hi)) return hs.bins;
  const auto b = static_cast<int>((v - hs.lo) / (hs.hi - hs.lo) * hs.bins);
  return static_cast<std::size_t>(std::min(b, hs.bins - 1));
}

std::size_t torus_bin(VecRef v, int bins) {
  const int i = std::min(static_cast<int>(wrap01(v[0]) * bins), bins - 1);
  const int j = std::min(static_cast<int>(wrap01(v[1]) * bins), bins - 1);
  return static_cast<std::size_t>(i) * bins + j;
}

double tv_distance(const std::vector<std::size_t>& counts, std::size_t n, const std::vector<double>& p) {
  double tv = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) tv += std::abs(static_cast<double>(counts[b]) / n - p[b]);
  return 0.5 * tv;
}

void check_support(const TargetPair& tp) {
  const bool torus = tp.domain().kind == DomainKind::kTorus;
  if (!torus && tp.dim() != 1) throw std::invalid_argument("histogram checks support 1D targets and the torus");
}

}  // namespace

TransportCheck transport_map_check(const TargetPair& tp, const FlowField& f, std::size_t n,
                                   std::uint64_t seed, const HistogramSpec& hs,
                                   const TransportOptions& opts) {
  check_support(tp);
  const bool torus = tp.domain().kind == DomainKind::kTorus;
  std::vector<TransportResult> res(n);
  parallel_for(n, [&](std::size_t i) { res[i] = transport_time(tp, f, sample_base_one(tp, seed, i), opts); });

  const double log_z1 = tp.exact_log_z1().value_or(0.0);
  std::vector<double> p;
  if (torus) {
    p = torus_bin_probabilities(
        [&](double a, double b) { return std::exp(-tp.u1(Vec{{a, b}}) - log_z1); }, hs.bins);
  } else {
    p = line_bin_probabilities([&](double a) { return std::exp(-tp.u1(Vec::Constant(1, a)) - log_z1); }, hs);
  }
  std::vector<std::size_t> counts(p.size(), 0);
  TransportCheck out;
  out.bins = hs.bins;
  for (const auto& r : res) {
    if (!r.ok) {
      ++out.failures;
      continue;
    }
    ++counts[torus ? torus_bin(r.point, hs.bins) : line_bin(r.point[0], hs)];
  }
  out.n = n - out.failures;
  if (out.failures * 100 > n) throw std::runtime_error("transport_map_check: more than 1% of transport times failed");
  out.tv = tv_distance(counts, out.n, p);
  return out;
}

double base_histogram_tv(const TargetPair& tp, std::size_t n, std::uint64_t seed, const HistogramSpec& hs) {
  check_support(tp);
  const bool torus = tp.domain().kind == DomainKind::kTorus;
  std::vector<double> p;
  if (torus) {
    p.assign(static_cast<std::size_t>(hs.bins) * hs.bins, 1.0 / (hs.bins * hs.bins));
  } else {
    p = line_bin_probabilities([&](double a) { return std::exp(-tp.u0(Vec::Constant(1, a))); }, hs);
  }
  std::vector<std::size_t> counts(p.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = sample_base_one(tp, seed, i);
    ++counts[torus ? torus_bin(x, hs.bins) : line_bin(x[0], hs)];
  }
  return tv_distance(counts, n, p);
}

}  // namespace neis
