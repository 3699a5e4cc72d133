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

#include "neis/config.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "neis/zerovar.hpp"

namespace neis {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
  if (trim(v.substr(pos)).size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

Vec to_vec(const std::string& key, const std::string& v) {
  std::vector<double> xs;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) xs.push_back(to_double(key, trim(item)));
  if (xs.empty()) throw ConfigError(key + ": empty list");
  return Eigen::Map<Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

// Walks one section, checks every key against the allowed set.
class Section {
 public:
  Section(const pt::ptree& root, std::string name, std::set<std::string> allowed)
      : name_(std::move(name)) {
    auto it = root.find(name_);
    if (it == root.not_found()) return;
    present_ = true;
    node_ = &it->second;
    for (const auto& kv : *node_) {
      if (!allowed.count(kv.first)) throw ConfigError("unknown key [" + name_ + "] " + kv.first);
    }
  }

  bool present() const { return present_; }

  std::optional<std::string> get(const std::string& key) const {
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::string full(const std::string& key) const { return name_ + "." + key; }

  void read(const std::string& key, std::string& out) const {
    if (auto v = get(key)) out = *v;
  }
  void read(const std::string& key, double& out) const {
    if (auto v = get(key)) out = to_double(full(key), *v);
  }
  void read(const std::string& key, int& out) const {
    if (auto v = get(key)) out = static_cast<int>(to_int(full(key), *v));
  }
  void read(const std::string& key, std::uint64_t& out) const {
    if (auto v = get(key)) {
      const long long i = to_int(full(key), *v);
      if (i < 0) throw ConfigError(full(key) + ": must be non-negative");
      out = static_cast<std::uint64_t>(i);
    }
  }
 private:
  std::string name_;
  bool present_ = false;
  const pt::ptree* node_ = nullptr;
};

Method method_from_string(const std::string& s) {
  if (s == "vanilla") return Method::kVanilla;
  if (s == "neis-integration" || s == "integration") return Method::kNeisIntegration;
  if (s == "neis-ode" || s == "ode") return Method::kNeisOde;
  if (s == "ais") return Method::kAis;
  throw ConfigError("method.estimator: unknown estimator '" + s + "'");
}

ExperimentConfig from_tree(const pt::ptree& root) {
  static const std::set<std::string> sections = {"target", "flow",    "method",    "train",
                                                 "compare", "output", "transport", "run"};
  for (const auto& kv : root) {
    if (!sections.count(kv.first)) {
      if (kv.second.empty()) throw ConfigError("key outside any section: " + kv.first);
      throw ConfigError("unknown section [" + kv.first + "]");
    }
  }
  ExperimentConfig c;

  Section run(root, "run", {"seed", "workers"});
  run.read("seed", c.seed);
  run.read("workers", c.workers);
  if (c.workers < 0) throw ConfigError("run.workers must be non-negative");

  Section tg(root, "target", {"name", "variances", "mean", "radius"});
  tg.read("name", c.target.name);
  if (auto v = tg.get("variances")) c.target.variances = to_vec("target.variances", *v);
  if (auto v = tg.get("mean")) c.target.mean = to_vec("target.mean", *v);
  tg.read("radius", c.target.funnel_radius);
  if (c.target.name == "gaussian") {
    if (c.target.variances.size() == 0) throw ConfigError("target.variances required for gaussian");
    if (c.target.mean.size() == 0) c.target.mean = Vec::Zero(c.target.variances.size());
    if (c.target.mean.size() != c.target.variances.size()) {
      throw ConfigError("target.mean and target.variances differ in length");
    }
  }

  Section fl(root, "flow", {"kind", "width", "layers", "seed", "params", "alpha", "beta", "grid", "prune", "velocity"});
  if (auto v = fl.get("velocity")) c.flow.velocity = to_vec("flow.velocity", *v);
  fl.read("kind", c.flow.kind);
  fl.read("width", c.flow.width);
  fl.read("layers", c.flow.layers);
  fl.read("seed", c.flow.seed);
  fl.read("params", c.flow.params);
  fl.read("alpha", c.flow.alpha);
  fl.read("beta", c.flow.beta);
  fl.read("grid", c.flow.grid);
  fl.read("prune", c.flow.prune);

  Section me(root, "method", {"estimator", "n_steps", "t_minus", "n", "budget", "ais_k", "ais_tau", "repeat"});
  if (auto v = me.get("estimator")) c.method.spec.method = method_from_string(*v);
  me.read("n_steps", c.method.spec.n_steps);
  me.read("t_minus", c.method.spec.t_minus);
  me.read("ais_k", c.method.spec.ais_k);
  me.read("ais_tau", c.method.spec.ais_tau);
  me.read("repeat", c.method.repeat);
  if (auto v = me.get("n")) {
    const long long n = to_int("method.n", *v);
    if (n < 2) throw ConfigError("method.n must be at least 2");
    c.method.n = static_cast<std::size_t>(n);
  }
  if (auto v = me.get("budget")) {
    try {
      c.method.budget = parse_budget(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("method.budget: ") + e.what());
    }
  }
  if (c.method.n && c.method.budget) throw ConfigError("method: give exactly one of n and budget");
  if (c.method.repeat < 1) throw ConfigError("method.repeat must be positive");
  if (c.method.spec.n_steps < 1) throw ConfigError("method.n_steps must be positive");
  if (c.method.spec.ais_k < 1) throw ConfigError("method.ais_k must be positive");

  Section tr(root, "train", {"steps", "batch", "n_steps", "t_minus", "lr", "scheme", "assist", "c",
                             "upsilon", "varsigma", "z_steps", "seed"});
  if (tr.present()) {
    TrainConfig t;
    t.seed = c.seed;
    tr.read("steps", t.steps);
    tr.read("batch", t.batch);
    tr.read("n_steps", t.n_steps);
    tr.read("t_minus", t.t_minus);
    tr.read("lr", t.lr);
    tr.read("seed", t.seed);
    if (auto v = tr.get("scheme")) {
      if (*v == "integration") t.scheme = GradScheme::kIntegration;
      else if (*v == "ode") t.scheme = GradScheme::kOde;
      else throw ConfigError("train.scheme: expected integration or ode");
    }
    bool assist = false;
    if (auto v = tr.get("assist")) assist = to_bool("train.assist", *v);
    if (assist) {
      AssistConfig a;
      tr.read("c", a.c);
      tr.read("upsilon", a.upsilon);
      tr.read("varsigma", a.varsigma);
      tr.read("z_steps", a.z_steps);
      if (a.c < 0.0 || a.c > 1.0) throw ConfigError("train.c must lie in [0, 1]");
      if (a.upsilon < 0.0 || a.upsilon > 1.0) throw ConfigError("train.upsilon must lie in [0, 1]");
      t.assist = a;
    } else {
      for (const char* k : {"c", "upsilon", "varsigma", "z_steps"}) {
        if (tr.get(k)) throw ConfigError(std::string("train.") + k + " given without assist = true");
      }
    }
    if (t.steps < 1 || t.batch < 2 || t.n_steps < 1 || !(t.lr > 0.0)) {
      throw ConfigError("train: need steps >= 1, batch >= 2, n_steps >= 1, lr > 0");
    }
    c.train = t;
  }

  Section cmp(root, "compare", {"ais_k", "deduct_training", "neis_budget"});
  cmp.read("ais_k", c.compare_ais_k);
  if (auto v = cmp.get("deduct_training")) c.deduct_training = to_bool("compare.deduct_training", *v);
  if (auto v = cmp.get("neis_budget")) {
    try {
      c.compare_neis_budget = parse_budget(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("compare.neis_budget: ") + e.what());
    }
    if (cmp.get("deduct_training")) throw ConfigError("compare: neis_budget and deduct_training are exclusive");
  }

  Section tra(root, "transport", {"n", "bins"});
  tra.read("n", c.transport_n);
  tra.read("bins", c.transport_bins);

  Section out(root, "output", {"path"});
  out.read("path", c.out);
  return c;
}

}  // namespace

double parse_budget(const std::string& text) {
  std::string s = trim(text);
  double scale = 1.0;
  if (s.size() >= 2) {
    std::string tail = s.substr(s.size() - 2);
    for (auto& ch : tail) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (tail == "MB") {
      scale = 1e6;
      s = trim(s.substr(0, s.size() - 2));
    }
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad budget '" + text + "'");
  }
  if (pos != s.size() || !(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("bad budget '" + text + "'");
  return v * scale;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree root;
  std::istringstream is(text);
  try {
    pt::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_tree(root);
}

ExperimentConfig load_config(const std::string& path) {
  pt::ptree root;
  try {
    pt::read_ini(path, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_tree(root);
}

std::size_t samples_for_budget(const MethodSpec& m, double budget) {
  const double cost = static_cast<double>(m.cost_per_sample().u1);
  if (budget < cost) throw ConfigError("budget is smaller than the cost of one sample");
  // guard against 4.2e6 / 200 landing just below an integer
  return static_cast<std::size_t>(std::floor(budget / cost * (1.0 + 1e-12)));
}

TargetPair build_target(const TargetBlock& b) {
  if (b.name == "gaussmix2d") return TargetPair::gauss_mix_2d();
  if (b.name == "gaussmix10d") return TargetPair::gauss_mix_10d();
  if (b.name == "funnel10d") return TargetPair::funnel_10d(b.funnel_radius);
  if (b.name == "torus2d") return TargetPair::torus_mix_2d();
  if (b.name == "gaussian") {
    try {
      return TargetPair::gaussian(b.variances, b.mean);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("target: ") + e.what());
    }
  }
  throw ConfigError("target.name: unknown target '" + b.name + "'");
}

std::optional<FlowField> build_flow(const FlowBlock& b, const TargetPair& tp) {
  if (b.kind == "none") return std::nullopt;
  try {
    if (!b.params.empty()) {
      FlowField f = load_flow(b.params);
      if (f.dim() != tp.dim()) throw ConfigError("flow.params: dimension does not match the target");
      return f;
    }
    if (b.kind == "gaussian_linear") {
      const GaussMixSpec* m = tp.mixture();
      if (tp.name() != "gaussian" || m == nullptr) throw ConfigError("flow gaussian_linear needs target gaussian");
      return gaussian_linear_flow(m->variances.front(), m->means.front());
    }
    if (b.kind == "torus_spectral") {
      if (tp.domain().kind != DomainKind::kTorus) throw ConfigError("flow torus_spectral needs the torus target");
      return torus_zero_variance_flow(torus_poisson_solve(torus_source(tp, b.grid), b.prune));
    }
    switch (flow_kind_from_string(b.kind)) {
      case FlowKind::kGradientMlp: return FlowField::gradient_mlp(tp.dim(), b.width, b.seed, b.layers);
      case FlowKind::kGenericMlp: return FlowField::generic_mlp(tp.dim(), b.width, b.seed, b.layers);
      case FlowKind::kGenericLinear: return FlowField::generic_linear(tp.dim(), b.seed);
      case FlowKind::kTwoParamFunnel: return FlowField::two_param_funnel(tp.dim(), b.alpha, b.beta);
      case FlowKind::kConstant:
        if (b.velocity.size() != tp.dim()) throw ConfigError("flow.velocity must have the target dimension");
        return FlowField::constant(b.velocity);
      case FlowKind::kRadialMixture: {
        const GaussMixSpec* m = tp.mixture();
        if (m == nullptr) throw ConfigError("flow radial_mixture needs a Gaussian-mixture target");
        return FlowField::radial_mixture(*m);
      }
      default: throw ConfigError("flow.kind '" + b.kind + "' cannot be built from a config");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("flow: ") + e.what());
  }
}

}  // namespace neis
