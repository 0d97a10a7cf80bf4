/*
 * Copyright 2026 The fedadmm-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedadmm/fedadmm.hpp"
#include "oracles.hpp"

namespace {

using namespace fedadmm;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fedadmm_accept_" + name);
  fs::remove_all(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Quadratic ensemble runs shared by the tracking, lemma and theorem checks
// ---------------------------------------------------------------------------

constexpr int kSeeds = 20;
constexpr int kRounds = 200;

struct EnsembleRun {
  std::vector<RoundRecord> records;
  double gap0 = 0, lagrangian0 = 0, f_star = 0, L = 0;
};

ExperimentConfig ensemble_config() {
  ExperimentConfig c;
  c.model = ModelKind::Quadratic;
  c.m = 20;
  c.quad_dim = 5;
  c.fraction = 0.1;
  c.rounds = kRounds;
  c.epochs = 5;
  c.batch_size = 0;
  c.client_lr = 0.1;
  c.eta_rule = EtaRule::Participation;
  c.verify = true;
  return c;
}

struct Ensemble {
  std::vector<EnsembleRun> runs;
  double rho = 0;
  double seconds = 0;
};

Ensemble run_ensemble() {
  const auto t0 = std::chrono::steady_clock::now();
  Ensemble e;
  auto cfg = ensemble_config();
  const double L = World(cfg).lipschitz().value();  // the ensemble is fixed across seeds
  e.rho = 4 * L;
  cfg.rho = e.rho;
  for (int s = 1; s <= kSeeds; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    World world(cfg);
    EnsembleRun run;
    run.gap0 = world.initial_gap();
    run.lagrangian0 = world.initial_lagrangian();
    run.f_star = world.f_star().value();
    run.L = L;
    run.records = simulate(world);
    e.runs.push_back(std::move(run));
  }
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

Outcome check_tracking(const Ensemble& e) {
  int bad = 0, missing = 0;
  for (const auto& run : e.runs)
    for (const auto& r : run.records) {
      if (!r.tracking_ok) ++missing;
      else bad += !*r.tracking_ok;
    }
  const bool ok = bad == 0 && missing == 0 && e.seconds < 5.0;
  return {ok, fmt("%d seeds x %d rounds, %d violations, %d unchecked, %.2fs", kSeeds, kRounds, bad, missing, e.seconds)};
}

Outcome check_lemmas(const Ensemble& e) {
  int bad1 = 0, bad3 = 0, missing = 0;
  for (const auto& run : e.runs)
    for (const auto& r : run.records) {
      if (!r.lemma1_ok || !r.lemma3_ok) {
        ++missing;
        continue;
      }
      bad1 += !*r.lemma1_ok;
      bad3 += !*r.lemma3_ok;
    }
  const bool ok = bad1 == 0 && bad3 == 0 && missing == 0;
  return {ok, fmt("rho=4L=%.4g, lemma1 violations %d, lemma3 violations %d, unchecked %d", e.rho, bad1, bad3, missing)};
}

// Mean over seeds of (1/mT) sum_{t<T} V^t against the mean of the per-seed
// bounds, each built from that seed's L^0 and running eps_max.
Outcome check_theorem(const Ensemble& e) {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = ensemble_config().m;
  const double p_min = 0.1;
  double worst_ratio = 0;
  int worst_T = 0, bad = 0;
  std::vector<double> gap_sum(e.runs.size());
  for (std::size_t s = 0; s < e.runs.size(); ++s) gap_sum[s] = e.runs[s].gap0;
  for (int T = 1; T <= kRounds; ++T) {
    double lhs = 0, rhs = 0;
    for (std::size_t s = 0; s < e.runs.size(); ++s) {
      const auto& run = e.runs[s];
      lhs += gap_sum[s] / (static_cast<double>(m) * T);
      const auto k = theorem1_constants(run.L, e.rho, p_min, run.records[T - 1].eps_max.value());
      rhs += theorem1_bound(k, run.lagrangian0, run.f_star, m, T);
      gap_sum[s] += run.records[T - 1].gap.value();
    }
    lhs /= static_cast<double>(e.runs.size());
    rhs /= static_cast<double>(e.runs.size());
    bad += !leq_with_slack(lhs, rhs);
    if (lhs / rhs > worst_ratio) {
      worst_ratio = lhs / rhs;
      worst_T = T;
    }
  }
  const double secs = e.seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {bad == 0 && secs < 30.0,
          fmt("T=1..%d, %d violations, worst avg/bound %.3g at T=%d, %.2fs", kRounds, bad, worst_ratio, worst_T, secs)};
}

// ---------------------------------------------------------------------------

Outcome check_kkt() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = ensemble_config();
  cfg.fraction = 1.0;
  cfg.exact_local = true;
  cfg.rho = 1.0;
  cfg.rounds = 500;
  cfg.verify = false;
  World world(cfg);
  simulate(world);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> c;
  for (const auto& obj : world.objectives()) {
    const auto& q = std::get<Quadratic>(obj.model);
    A.push_back(q.curvature);
    c.push_back(q.center);
  }
  const auto theta_star = oracle::quadratic_sum_minimizer_gd(A, c);
  ParamVector sum_y = ParamVector::Zero(theta_star.size());
  for (const auto& cl : world.clients()) sum_y += cl.y;
  const double dist = (world.server().theta - theta_star).norm();
  return {dist <= 1e-6 && sum_y.norm() <= 1e-6 && secs < 2.0,
          fmt("|theta-theta*|=%.2e, |sum y|=%.2e after 500 rounds, %.2fs", dist, sum_y.norm(), secs)};
}

ExperimentConfig small_logistic() {
  ExperimentConfig c;
  c.m = 20;
  c.fraction = 0.2;
  c.per_class = 60;
  c.dim = 8;
  c.classes = 4;
  c.rounds = 50;
  c.seed = 7;
  return c;
}

// Records and final model must agree exactly.
bool identical_runs(const ExperimentConfig& a, const ExperimentConfig& b, std::string& why) {
  World wa(a), wb(b);
  const auto ra = simulate(wa), rb = simulate(wb);
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (to_json(ra[i]).dump() != to_json(rb[i]).dump()) {
      why = "record " + std::to_string(i + 1) + " differs";
      return false;
    }
  if (ra.size() != rb.size() || !(wa.server().theta == wb.server().theta)) {
    why = "final model differs";
    return false;
  }
  return true;
}

Outcome check_reductions() {
  auto admm = small_logistic();
  admm.strategy = StrategyKind::FedADMM;
  admm.freeze_dual = true;
  admm.rho = 0.1;
  auto prox = admm;
  prox.strategy = StrategyKind::FedProx;
  prox.freeze_dual = false;
  std::string why1 = "identical", why2 = "identical";
  const bool a = identical_runs(admm, prox, why1);

  auto prox0 = small_logistic();
  prox0.strategy = StrategyKind::FedProx;
  prox0.rho = 0.0;
  prox0.heterogeneous = false;
  auto avg = prox0;
  avg.strategy = StrategyKind::FedAvg;
  const bool b = identical_runs(prox0, avg, why2);
  return {a && b, "50 rounds: frozen-dual FedADMM vs FedProx " + why1 + ", FedProx(rho=0) vs FedAvg " + why2};
}

Outcome check_determinism() {
  std::string detail;
  bool ok = true;
  for (auto kind : {StrategyKind::FedADMM, StrategyKind::FedProx, StrategyKind::Scaffold, StrategyKind::FedSGD}) {
    auto cfg = small_logistic();
    cfg.strategy = kind;
    cfg.rounds = 20;
    cfg.verify = kind == StrategyKind::FedADMM;
    const auto one = scratch("det1"), many = scratch("det4");
    cfg.threads = 1;
    const auto a = run_experiment(cfg, one);
    cfg.threads = 4;
    const auto b = run_experiment(cfg, many);
    const auto ja = slurp(a.dir / "rounds.jsonl"), jb = slurp(b.dir / "rounds.jsonl");
    const bool same = !ja.empty() && ja == jb;
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(kind)) + (same ? " same" : " DIFFERENT");
    fs::remove_all(one);
    fs::remove_all(many);
  }
  return {ok, "1 vs 4 threads: " + detail};
}

Outcome check_partition() {
  bool ok = true;
  std::string detail;
  for (auto [n, mean, stdev] : {std::tuple{60000, 300.0, 171.03}, std::tuple{50000, 250.0, 142.52}}) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % 10;
    const auto p = partition_imbalanced(labels, 200, 10000, 1);
    ok = ok && is_valid_partition(p, labels.size()) && std::abs(p.stats.mean - mean) <= 0.01 &&
         std::abs(p.stats.stdev - stdev) <= 0.01;
    detail += fmt("%sn=%d: mean %.2f stdev %.3f", detail.empty() ? "" : ", ", n, p.stats.mean, p.stats.stdev);
  }
  return {ok, detail};
}

Outcome check_bytes() {
  bool ok = true;
  std::string detail;
  for (auto [dim, classes] : {std::pair{5, 2}, std::pair{784, 10}}) {
    auto cfg = small_logistic();
    cfg.dim = dim;
    cfg.classes = classes;
    cfg.per_class = 20;
    cfg.m = 10;
    cfg.fraction = 0.3;
    cfg.rounds = 3;
    cfg.strategy = StrategyKind::FedADMM;
    World admm(cfg);
    const auto ra = simulate(admm);
    cfg.strategy = StrategyKind::Scaffold;
    World scaf(cfg);
    const auto rs = simulate(scaf);
    const auto ua = ra.back().bytes_up_cum, us = rs.back().bytes_up_cum;
    ok = ok && us == 2 * ua && ua == 8 * admm.dim() * 3 * 3;
    detail += fmt("%sd=%zu: %zu vs %zu", detail.empty() ? "" : ", ", admm.dim(), us, ua);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Qualitative rounds-to-target comparison
// ---------------------------------------------------------------------------

// Accelerated full-batch gradient descent on the pooled training set.
double centralized_accuracy(const ExperimentConfig& cfg) {
  World world(cfg);
  const auto& obj = world.objectives().front();
  const auto all = all_indices(world.train());
  const double L = lipschitz_bound(obj, world.train()).value;
  ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(world.dim())), z = theta;
  for (int it = 1; it <= 3000; ++it) {
    ParamVector next = z - eval_grad(obj, z, world.train(), all) / L;
    z = next + (static_cast<double>(it - 1) / (it + 2)) * (next - theta);
    theta = std::move(next);
  }
  return accuracy(obj, theta, world.test());
}

struct Variant {
  std::string label;
  std::function<void(ExperimentConfig&)> apply;
};

// Median over 5 seeds; a run that never reaches the target counts as T+1.
double median_rounds(const ExperimentConfig& base, const Variant& v, double target) {
  std::vector<double> r;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto cfg = base;
    v.apply(cfg);
    cfg.seed = s;
    cfg.target_accuracy = target;
    cfg.early_stop = true;
    const auto recs = simulate(cfg);
    const auto hit = rounds_to_target(recs, target);
    r.push_back(hit ? *hit : cfg.rounds + 1);
  }
  return median(r);
}

Outcome check_qualitative() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig base;  // 10 classes x 1000, d=50, m=100, C=0.1, 2 shards per client, E=5
  base.batch_size = 200;
  base.rounds = 100;
  const double target = centralized_accuracy(base) - 0.02;

  const std::vector<double> lrs = {0.01, 0.1, 0.2, 0.5};
  std::vector<std::pair<std::string, std::vector<Variant>>> groups;
  std::vector<Variant> admm, avg, prox, sgd;
  for (double lr : lrs) {
    for (auto rule : {EtaRule::Constant, EtaRule::Participation})
      admm.push_back({fmt("lr=%g eta=%s", lr, rule == EtaRule::Constant ? "1" : "|S|/m"), [=](ExperimentConfig& c) {
                        c.strategy = StrategyKind::FedADMM;
                        c.rho = 0.01;
                        c.client_lr = lr;
                        c.eta_rule = rule;
                      }});
    avg.push_back({fmt("lr=%g", lr), [=](ExperimentConfig& c) {
                     c.strategy = StrategyKind::FedAvg;
                     c.client_lr = lr;
                   }});
    prox.push_back({fmt("lr=%g", lr), [=](ExperimentConfig& c) {
                      c.strategy = StrategyKind::FedProx;
                      c.rho = 0.1;
                      c.client_lr = lr;
                    }});
    sgd.push_back({fmt("lr=%g", lr), [=](ExperimentConfig& c) {
                     c.strategy = StrategyKind::FedSGD;
                     c.server_lr = lr;
                   }});
  }
  groups = {{"fedadmm", admm}, {"fedavg", avg}, {"fedprox", prox}, {"fedsgd", sgd}};

  std::vector<double> best;
  std::string detail = fmt("target %.4f;", target);
  for (const auto& [name, variants] : groups) {
    double b = base.rounds + 1.0;
    std::string arg;
    for (const auto& v : variants) {
      const double r = median_rounds(base, v, target);
      if (r < b) {
        b = r;
        arg = v.label;
      }
    }
    best.push_back(b);
    detail += fmt(" %s %g (%s)", name.c_str(), b, arg.empty() ? "none" : arg.c_str());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail += fmt("; %.1fs", secs);
  const bool ok = best[0] <= base.rounds && best[0] <= best[1] && best[0] <= best[2] && best[0] <= best[3] &&
                  secs < 120.0;
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Dataset random_dataset(int n, int p, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Dataset d;
  d.name = "random";
  d.classes = classes;
  d.features.resize(n, p);
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) d.features(i, j) = normal(rng);
    d.labels[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  }
  return d;
}

Outcome check_gradients() {
  const auto data = random_dataset(30, 6, 4, 5);
  const Batch batch = all_indices(data);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(6, 6);
  const std::vector<std::pair<std::string, Objective>> kinds = {
      {"quadratic", make_quadratic(B * B.transpose(), ParamVector::LinSpaced(6, -1, 2), 0.01)},
      {"logistic", make_logistic(6, 4, 0.01)},
      {"smallnet", make_smallnet(6, 5, 4, 10.0, 0.01)},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, obj] : kinds) {
    double worst = 0;
    for (int point = 0; point < 100; ++point) {
      ParamVector w(static_cast<Eigen::Index>(param_dim(obj)));
      for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = normal(rng);
      const auto g = eval_grad(obj, w, data, batch);
      const auto ref =
          oracle::fd_gradient([&](const Eigen::VectorXd& x) { return eval_loss(obj, x, data, batch); }, w);
      worst = std::max(worst, oracle::relative_error(g, ref));
    }
    ok = ok && worst <= 1e-5;
    detail += fmt("%s%s %.1e", detail.empty() ? "" : ", ", name.c_str(), worst);
  }
  return {ok, "worst relative error over 100 points: " + detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const Outcome& o) {
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [&](const char* name, const std::function<Outcome()>& fn) {
    try {
      report(name, fn());
    } catch (const std::exception& e) {
      report(name, {false, std::string("exception: ") + e.what()});
    }
  };

  Ensemble ensemble;
  guarded("tracking identity", [&] {
    ensemble = run_ensemble();
    return check_tracking(ensemble);
  });
  guarded("lemma 1 / lemma 3", [&] { return check_lemmas(ensemble); });
  guarded("theorem 1 bound", [&] { return check_theorem(ensemble); });
  guarded("kkt convergence", check_kkt);
  guarded("reduction equivalences", check_reductions);
  guarded("determinism", check_determinism);
  guarded("partition statistics", check_partition);
  guarded("byte accounting", check_bytes);
  guarded("qualitative comparison", check_qualitative);
  guarded("gradient checks", check_gradients);
  return failures == 0 ? 0 : 1;
}
