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

// neis command-line driver.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "neis/config.hpp"
#include "neis/dynamics.hpp"
#include "neis/estimator.hpp"
#include "neis/parallel.hpp"
#include "neis/rng.hpp"
#include "neis/selftest.hpp"
#include "neis/training.hpp"
#include "neis/zerovar.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Invariant violated at run time: exit code 1.
struct InvariantFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::string fault = "none";
};

neis::ExperimentConfig load(const Options& o) {
  neis::ExperimentConfig c;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw neis::ConfigError("config file not found: " + o.config);
    c = neis::load_config(o.config);
  }
  if (o.seed) {
    c.seed = *o.seed;
    if (c.train) c.train->seed = *o.seed;
  }
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = *o.out;
  if (c.workers > 0) neis::set_worker_count(c.workers);
  fs::create_directories(c.out);
  return c;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << line << '\n';
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::size_t sample_count(const neis::MethodBlock& m, std::optional<double> budget_override = std::nullopt) {
  const auto budget = budget_override ? budget_override : m.budget;
  if (budget) return neis::samples_for_budget(m.spec, *budget);
  if (m.n) return *m.n;
  throw neis::ConfigError("method: give n or budget");
}

std::uint64_t repeat_seed(std::uint64_t seed, int r) {
  return r == 0 ? seed : neis::mix_seed(seed, static_cast<std::uint64_t>(r));
}

neis::FlowField require_flow(const neis::ExperimentConfig& c, const neis::TargetPair& tp) {
  auto f = neis::build_flow(c.flow, tp);
  if (!f) throw neis::ConfigError("this command needs a flow");
  return *f;
}

std::vector<neis::EstimateReport> run_estimates(const neis::TargetPair& tp, const neis::FlowField* f,
                                                const neis::MethodSpec& spec, std::size_t n, int repeat,
                                                std::uint64_t seed, const fs::path& sink) {
  std::vector<neis::EstimateReport> out;
  for (int r = 0; r < repeat; ++r) {
    const neis::QueryCounts before = tp.counts();
    auto rep = neis::estimate(tp, f, spec, n, repeat_seed(seed, r));
    const neis::QueryCounts used = tp.counts() - before;
    const neis::QueryCounts cost = spec.cost_per_sample();
    // flowlines that blow up stop querying, so the tally can fall short but never exceed
    if (used.u1 > cost.u1 * n || used.grad_u1 > cost.grad_u1 * n) {
      throw InvariantFailure("query tally does not match the budget arithmetic");
    }
    const std::string line = rep.to_json();
    append_line(sink, line);
    std::cout << line << '\n';
    out.push_back(std::move(rep));
  }
  return out;
}

ordered_json spread(const std::vector<neis::EstimateReport>& reps) {
  std::vector<double> means;
  for (const auto& r : reps) means.push_back(r.mean);
  const auto s = neis::sample_stats(means);
  return {{"method", reps.front().method},
          {"n", reps.front().n},
          {"repeats", reps.size()},
          {"mean_of_means", s.mean},
          {"std_of_means", std::sqrt(s.variance)}};
}

int cmd_estimate(const Options& o) {
  const auto c = load(o);
  const neis::TargetPair tp = neis::build_target(c.target);
  std::optional<neis::FlowField> f;
  const auto m = c.method.spec.method;
  if (m == neis::Method::kNeisIntegration || m == neis::Method::kNeisOde) f = require_flow(c, tp);
  const std::size_t n = sample_count(c.method);
  const auto reps = run_estimates(tp, f ? &*f : nullptr, c.method.spec, n, c.method.repeat, c.seed,
                                  fs::path(c.out) / "estimates.jsonl");
  if (c.method.repeat > 1) write_json(fs::path(c.out) / "estimate_summary.json", spread(reps));
  return 0;
}

struct Trained {
  neis::FlowField flow;
  neis::QueryCounts queries;
};

Trained train_and_save(const neis::ExperimentConfig& c, const neis::TargetPair& tp) {
  if (!c.train) throw neis::ConfigError("missing [train] section");
  const neis::FlowField f0 = require_flow(c, tp);
  if (f0.n_params() == 0) throw neis::ConfigError("flow has no trainable parameters");
  const auto res = neis::train(tp, f0, *c.train);
  const fs::path dir(c.out);
  neis::write_history_csv(res.history, (dir / "history.csv").string());
  neis::save_flow(res.final_flow, (dir / "final.flow").string());
  neis::save_flow(res.best_flow, (dir / "best.flow").string());
  ordered_json j;
  j["target"] = tp.name();
  j["flow"] = neis::to_string(f0.kind());
  j["steps"] = res.history.records.size();
  j["best_step"] = res.history.best_step;
  j["best_variance"] = res.history.best_variance;
  j["final_variance"] = res.history.records.empty() ? 0.0 : res.history.records.back().variance;
  j["queries_u1"] = res.history.queries.u1;
  j["queries_grad_u1"] = res.history.queries.grad_u1;
  j["aborted"] = res.history.aborted;
  write_json(dir / "train_summary.json", j);
  std::cout << j.dump() << '\n';
  if (res.history.aborted) throw InvariantFailure("training produced a non-finite loss");
  return {res.best_flow, res.history.queries};
}

int cmd_train(const Options& o) {
  const auto c = load(o);
  const neis::TargetPair tp = neis::build_target(c.target);
  train_and_save(c, tp);
  return 0;
}

int cmd_compare(const Options& o) {
  const auto c = load(o);
  const neis::TargetPair tp = neis::build_target(c.target);
  if (!c.method.budget) throw neis::ConfigError("compare needs method.budget");
  const double budget = *c.method.budget;
  neis::MethodSpec neis_spec = c.method.spec;
  if (neis_spec.method != neis::Method::kNeisIntegration && neis_spec.method != neis::Method::kNeisOde) {
    neis_spec.method = neis::Method::kNeisIntegration;
  }
  neis::QueryCounts train_q;
  std::optional<neis::FlowField> f;
  if (c.train) {
    auto t = train_and_save(c, tp);
    f = t.flow;
    train_q = t.queries;
  } else {
    f = require_flow(c, tp);
  }
  const double neis_budget = c.compare_neis_budget ? *c.compare_neis_budget
                             : c.deduct_training  ? budget - static_cast<double>(train_q.u1)
                                                  : budget;
  if (neis_budget <= 0.0) throw neis::ConfigError("training used the whole budget");

  neis::MethodSpec ais_spec;
  ais_spec.method = neis::Method::kAis;
  ais_spec.ais_k = c.compare_ais_k;
  ais_spec.ais_tau = c.method.spec.ais_tau;
  const fs::path sink = fs::path(c.out) / "compare.jsonl";
  const auto rn = run_estimates(tp, &*f, neis_spec, neis::samples_for_budget(neis_spec, neis_budget),
                                c.method.repeat, c.seed, sink);
  const auto ra = run_estimates(tp, nullptr, ais_spec, neis::samples_for_budget(ais_spec, budget), c.method.repeat,
                                neis::mix_seed(c.seed, 0xA15), sink);
  ordered_json j;
  j["budget_u1"] = budget;
  j["neis_budget_u1"] = neis_budget;
  j["training_u1"] = train_q.u1;
  j["training_grad_u1"] = train_q.grad_u1;
  j["neis"] = spread(rn);
  j["ais"] = spread(ra);
  write_json(fs::path(c.out) / "compare_summary.json", j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_poisson(const Options& o) {
  const auto c = load(o);
  const neis::TargetPair tp = neis::build_target(c.target);
  if (tp.domain().kind != neis::DomainKind::kTorus) throw neis::ConfigError("poisson needs target torus2d");
  const auto sol = neis::torus_poisson_solve(neis::torus_source(tp, c.flow.grid), c.flow.prune);
  const fs::path dir(c.out);
  neis::write_grid_csv(sol.v, (dir / "poisson_v.csv").string());
  neis::write_grid_csv(sol.rhs, (dir / "poisson_rhs.csv").string());
  ordered_json j;
  j["grid"] = sol.n;
  j["residual"] = sol.residual;
  j["modes"] = sol.modes->coef.size();
  write_json(dir / "poisson_summary.json", j);
  std::cout << j.dump() << '\n';
  if (!(sol.residual < 1e-6)) throw InvariantFailure("Poisson residual too large");
  return 0;
}

int cmd_transport(const Options& o) {
  const auto c = load(o);
  const neis::TargetPair tp = neis::build_target(c.target);
  const neis::FlowField f = require_flow(c, tp);
  neis::HistogramSpec hs;
  hs.bins = c.transport_bins;
  neis::TransportOptions opts;
  opts.n_steps = c.method.spec.n_steps;
  const fs::path dir(c.out);
  {
    std::ofstream os(dir / "transport.csv");
    os.precision(17);
    os << "i,kappa,ok";
    for (int k = 0; k < tp.dim(); ++k) os << ",x" << k + 1;
    for (int k = 0; k < tp.dim(); ++k) os << ",t" << k + 1;
    os << '\n';
    const std::size_t rows = std::min<std::size_t>(c.transport_n, 200);
    for (std::size_t i = 0; i < rows; ++i) {
      const neis::Vec x = neis::sample_base_one(tp, c.seed, i);
      const auto r = neis::transport_time(tp, f, x, opts);
      os << i << ',' << r.kappa << ',' << r.ok;
      for (int k = 0; k < tp.dim(); ++k) os << ',' << x[k];
      for (int k = 0; k < tp.dim(); ++k) os << ',' << (r.ok ? r.point[k] : NAN);
      os << '\n';
    }
  }
  const auto chk = neis::transport_map_check(tp, f, c.transport_n, c.seed, hs, opts);
  const double ref = neis::base_histogram_tv(tp, c.transport_n, neis::mix_seed(c.seed, 7), hs);
  const bool pass = chk.tv <= 1.5 * ref + 0.01;
  ordered_json j;
  j["n"] = chk.n;
  j["failures"] = chk.failures;
  j["bins"] = chk.bins;
  j["tv"] = chk.tv;
  j["tv_base_reference"] = ref;
  j["pass"] = pass;
  write_json(dir / "transport_summary.json", j);
  std::cout << j.dump() << '\n';
  if (!pass) throw InvariantFailure("pushforward histogram does not match the target");
  return 0;
}

int cmd_selftest(const Options& o) {
  if (o.workers) neis::set_worker_count(*o.workers);
  if (o.fault == "rk4") neis::set_fault(neis::Fault::kRk4Weights);
  else if (o.fault == "grad-sign") neis::set_fault(neis::Fault::kGradientSign);
  else if (o.fault != "none") throw neis::ConfigError("unknown fault '" + o.fault + "'");
  const auto rs = neis::run_selftest(std::cout);
  for (const auto& r : rs) {
    if (!r.pass) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-based non-equilibrium importance sampling"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (INI)");
    sub->add_option("--seed", o.seed, "override the run seed");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
  };
  auto* est = app.add_subcommand("estimate", "estimate Z1 with a fixed sample count or query budget");
  auto* trn = app.add_subcommand("train", "train a flow");
  auto* cmp = app.add_subcommand("compare", "train, then NEIS against AIS at matched U1 budgets");
  auto* poi = app.add_subcommand("poisson", "torus Poisson solve and grid dumps");
  auto* tra = app.add_subcommand("transport", "transport times and pushforward check");
  auto* st = app.add_subcommand("selftest", "invariant and oracle checks");
  for (auto* s : {est, trn, cmp, poi, tra, st}) common(s);
  st->add_option("--fault", o.fault, "inject a defect: none, rk4, grad-sign");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*est) return cmd_estimate(o);
    if (*trn) return cmd_train(o);
    if (*cmp) return cmd_compare(o);
    if (*poi) return cmd_poisson(o);
    if (*tra) return cmd_transport(o);
    if (*st) return cmd_selftest(o);
  } catch (const neis::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvariantFailure& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
