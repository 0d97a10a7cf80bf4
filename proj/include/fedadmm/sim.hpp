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

#pragma once

// Round orchestration: client sampling, heterogeneous local work, strategy
// dispatch, per-round telemetry and the runtime analysis checks.

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fedadmm/baselines.hpp"
#include "fedadmm/config.hpp"
#include "fedadmm/core.hpp"
#include "fedadmm/data.hpp"
#include "fedadmm/model.hpp"
#include "fedadmm/rng.hpp"

namespace fedadmm {

/// Uniform: ceil(C m) distinct ids without replacement. Bernoulli: each id
/// independently with probability C (may come back empty). Sorted ascending.
inline std::vector<int> sample_clients(int m, double fraction, SamplingScheme scheme, Rng& rng) {
  if (m < 1) throw ConfigError("sample_clients: m must be >= 1");
  if (!(fraction > 0) || fraction > 1) throw ConfigError("sample_clients: fraction must lie in (0, 1]");
  std::vector<int> active;
  if (scheme == SamplingScheme::Uniform) {
    const auto k = static_cast<int>(std::ceil(fraction * m - 1e-9));
    std::vector<int> ids(static_cast<std::size_t>(m));
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, m - 1);
      std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
    }
    active.assign(ids.begin(), ids.begin() + k);
  } else {
    std::bernoulli_distribution coin(fraction);
    for (int i = 0; i < m; ++i)
      if (coin(rng)) active.push_back(i);
  }
  std::sort(active.begin(), active.end());
  return active;
}

/// Uniform on [1, E_max] when heterogeneous, else E_max.
inline int draw_local_epochs(int e_max, bool heterogeneous, Rng& rng) {
  if (e_max < 1) throw ConfigError("draw_local_epochs: E_max must be >= 1");
  if (!heterogeneous) return e_max;
  return std::uniform_int_distribution<int>(1, e_max)(rng);
}

/// Runs fn(0..n-1) on up to `threads` workers. Exceptions are rethrown in
/// index order after all workers finish.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t k = 0; k < count; ++k) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RoundRecord {
  int round = 0;  // 1-based count of completed rounds
  std::vector<int> active;
  bool skipped = false;
  double train_loss = 0;
  std::optional<double> test_acc;
  std::optional<double> gap;         // V^t after the round (verify mode)
  std::optional<double> lagrangian;  // aggregate augmented Lagrangian (verify mode)
  std::optional<double> eps_max;     // largest local residual so far (verify mode)
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
  std::size_t bytes_up_cum = 0;
  std::size_t bytes_down_cum = 0;
  std::optional<bool> tracking_ok;
  std::optional<bool> lemma1_ok;  // dual-step bound
  std::optional<bool> lemma3_ok;  // Lagrangian lower bound
  std::optional<bool> theorem_ok; // running average gap vs. rate bound
  double wall_seconds = 0;        // not serialized to rounds.jsonl
};

inline nlohmann::ordered_json to_json(const RoundRecord& r) {
  auto opt = [](const auto& v) -> nlohmann::ordered_json {
    if (v) return *v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["active"] = r.active;
  j["skipped"] = r.skipped;
  j["train_loss"] = r.train_loss;
  j["test_acc"] = opt(r.test_acc);
  j["V_t"] = opt(r.gap);
  j["lagrangian"] = opt(r.lagrangian);
  j["eps_max"] = opt(r.eps_max);
  j["bytes_up"] = r.bytes_up;
  j["bytes_down"] = r.bytes_down;
  j["bytes_up_cum"] = r.bytes_up_cum;
  j["bytes_down_cum"] = r.bytes_down_cum;
  j["tracking_ok"] = opt(r.tracking_ok);
  j["lemma1_ok"] = opt(r.lemma1_ok);
  j["lemma3_ok"] = opt(r.lemma3_ok);
  j["theorem_ok"] = opt(r.theorem_ok);
  return j;
}

inline RoundRecord record_from_json(const nlohmann::json& j) {
  auto opt_d = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<double>();
  };
  auto opt_b = [&](const char* k) -> std::optional<bool> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<bool>();
  };
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.active = j.at("active").get<std::vector<int>>();
  r.skipped = j.at("skipped").get<bool>();
  r.train_loss = j.at("train_loss").get<double>();
  r.test_acc = opt_d("test_acc");
  r.gap = opt_d("V_t");
  r.lagrangian = opt_d("lagrangian");
  r.eps_max = opt_d("eps_max");
  r.bytes_up = j.at("bytes_up").get<std::size_t>();
  r.bytes_down = j.at("bytes_down").get<std::size_t>();
  r.bytes_up_cum = j.at("bytes_up_cum").get<std::size_t>();
  r.bytes_down_cum = j.at("bytes_down_cum").get<std::size_t>();
  r.tracking_ok = opt_b("tracking_ok");
  r.lemma1_ok = opt_b("lemma1_ok");
  r.lemma3_ok = opt_b("lemma3_ok");
  r.theorem_ok = opt_b("theorem_ok");
  return r;
}

/// 1-based index of the first record whose test accuracy reaches `target`.
inline std::optional<int> rounds_to_target(std::span<const RoundRecord> records, double target) {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].test_acc && *records[i].test_acc >= target) return static_cast<int>(i + 1);
  return std::nullopt;
}

/// "12", or "T+" when the target was never reached within T rounds.
inline std::string format_rounds_to_target(std::optional<int> r, std::size_t total_rounds) {
  return r ? std::to_string(*r) : std::to_string(total_rounds) + "+";
}

/// Per-client quadratics with eigenvalues drawn from [lo, hi] in a random
/// orthonormal basis (axis-aligned when `diagonal`), centers ~ N(0, scale^2 I).
inline std::vector<Objective> make_quadratic_ensemble(int m, int d, double lo, double hi, double center_scale,
                                                      bool diagonal, std::uint64_t seed, double l2 = 0.0) {
  std::vector<Objective> out;
  out.reserve(static_cast<std::size_t>(m));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> spectrum(lo, hi);
  for (int i = 0; i < m; ++i) {
    Rng rng = make_rng(seed, Stream::Problem, static_cast<std::uint64_t>(i));
    Eigen::VectorXd eig(d);
    for (int k = 0; k < d; ++k) eig[k] = spectrum(rng);
    Eigen::MatrixXd A;
    if (diagonal) {
      A = eig.asDiagonal();
    } else {
      Eigen::MatrixXd g(d, d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) g(r, c) = normal(rng);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
      const Eigen::MatrixXd q = qr.householderQ();
      A = q * eig.asDiagonal() * q.transpose();
      A = 0.5 * (A + A.transpose()).eval();
    }
    ParamVector c(d);
    for (int k = 0; k < d; ++k) c[k] = center_scale * normal(rng);
    out.push_back(make_quadratic(std::move(A), std::move(c), l2));
  }
  return out;
}

/// Everything one simulated federation owns. Local objectives point into the
/// datasets and partition held here, so a World is neither copied nor moved.
class World {
 public:
  explicit World(const ExperimentConfig& cfg) : config_(cfg), strategy_(cfg.strategy_spec()) {
    validate(config_);
    validate(strategy_);
    build_problem();
    init_state();
    if (config_.verify || config_.verify_theorem) init_analysis();
  }
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const ExperimentConfig& config() const noexcept { return config_; }
  const Strategy& strategy() const noexcept { return strategy_; }
  const ServerState& server() const noexcept { return server_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const std::vector<LocalObjective>& locals() const noexcept { return locals_; }
  const std::vector<Objective>& objectives() const noexcept { return objectives_; }
  const Dataset& train() const noexcept { return train_; }
  const Dataset& test() const noexcept { return test_; }
  const Partition& partition() const noexcept { return partition_; }
  std::size_t dim() const noexcept { return dim_; }
  int population() const noexcept { return config_.m; }

  std::optional<double> lipschitz() const noexcept { return lipschitz_; }
  bool lipschitz_heuristic() const noexcept { return lipschitz_heuristic_; }
  std::optional<double> f_star() const noexcept { return f_star_; }
  const std::optional<ConsensusSolution>& consensus() const noexcept { return consensus_; }
  double initial_lagrangian() const noexcept { return lagrangian0_; }
  double initial_gap() const noexcept { return gap0_; }

  /// Probability lower bound for a client to be active in a round.
  double p_min() const {
    if (config_.sampling == SamplingScheme::Bernoulli) return config_.fraction;
    return std::ceil(config_.fraction * config_.m - 1e-9) / config_.m;
  }

  double train_loss(const ParamVector& theta) const {
    if (config_.model == ModelKind::Quadratic) {
      double total = 0;
      for (const auto& f : locals_) total += f.loss(theta);
      return total / static_cast<double>(locals_.size());
    }
    return eval_loss(objectives_.front(), theta, train_, train_all_);
  }

  std::optional<double> test_accuracy(const ParamVector& theta) const {
    if (config_.model == ModelKind::Quadratic) return std::nullopt;
    return accuracy(objectives_.front(), theta, test_);
  }

  RoundRecord run_round() {
    const auto start = std::chrono::steady_clock::now();
    const int t = server_.round;
    const auto seed = config_.seed;
    Rng sampler = make_rng(seed, Stream::Sampling, static_cast<std::uint64_t>(t));
    const auto active = sample_clients(config_.m, config_.fraction, config_.sampling, sampler);

    ServerState current = server_;
    current.rho = config_.rho_schedule.at(t, config_.rho);
    current.eta = config_.eta_rule == EtaRule::Participation
                      ? static_cast<double>(active.size()) / static_cast<double>(config_.m)
                      : config_.eta_schedule.at(t, config_.eta);

    std::vector<LocalResult> results(active.size());
    const bool draws = config_.heterogeneous && strategy_.draws_epochs();
    parallel_for(active.size(), config_.threads, [&](std::size_t k) {
      const int id = active[k];
      Rng epoch_rng = make_rng(seed, Stream::Epochs, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(id));
      Rng batch_rng = make_rng(seed, Stream::Batching, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(id));
      const int epochs = draw_local_epochs(config_.epochs, draws, epoch_rng);
      results[k] = local_step(strategy_, clients_[static_cast<std::size_t>(id)], locals_[static_cast<std::size_t>(id)],
                              current, epochs, batch_rng);
    });

    std::vector<ClientState> before;
    if (analysing()) {
      before.reserve(active.size());
      for (int id : active) before.push_back(clients_[static_cast<std::size_t>(id)]);
    }

    std::vector<LocalMessage> messages;
    messages.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      clients_[static_cast<std::size_t>(active[k])] = std::move(results[k].state);
      messages.push_back(std::move(results[k].message));
    }
    server_ = aggregate(strategy_, current, messages, config_.m);

    RoundRecord rec;
    rec.round = server_.round;
    rec.active = active;
    rec.skipped = active.empty();
    rec.train_loss = train_loss(server_.theta);
    rec.test_acc = test_accuracy(server_.theta);
    const auto per_client = message_bytes(strategy_.kind, dim_);
    rec.bytes_up = active.size() * per_client.up;
    rec.bytes_down = active.size() * per_client.down;
    bytes_up_cum_ += rec.bytes_up;
    bytes_down_cum_ += rec.bytes_down;
    rec.bytes_up_cum = bytes_up_cum_;
    rec.bytes_down_cum = bytes_down_cum_;
    if (analysing()) analyse(rec, active, before, current);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
  }

 private:
  bool analysing() const noexcept {
    return (config_.verify || config_.verify_theorem) && strategy_.kind == StrategyKind::FedADMM;
  }

  bool tracking_configured() const noexcept {
    return config_.eta_rule == EtaRule::Participation && config_.rho_schedule.empty() && !strategy_.freeze_dual;
  }

  void build_problem() {
    const auto m = static_cast<std::size_t>(config_.m);
    if (config_.model == ModelKind::Quadratic) {
      objectives_ = make_quadratic_ensemble(config_.m, config_.quad_dim, config_.curvature_min,
                                            config_.curvature_max, config_.center_scale, config_.diagonal,
                                            config_.quad_seed, config_.l2);
      dim_ = static_cast<std::size_t>(config_.quad_dim);
      locals_.resize(m);
      for (std::size_t i = 0; i < m; ++i) locals_[i] = LocalObjective{&objectives_[i], nullptr, {}};
      return;
    }
    load_data();
    if (config_.model == ModelKind::Logistic) {
      objectives_ = {make_logistic(static_cast<int>(train_.dim()), train_.classes, config_.l2)};
    } else {
      objectives_ = {make_smallnet(static_cast<int>(train_.dim()), config_.hidden, train_.classes,
                                   config_.declared_lipschitz, config_.l2)};
    }
    dim_ = param_dim(objectives_.front());
    switch (config_.partition) {
      case PartitionScheme::IID:
        partition_ = partition_iid(train_.size(), m, config_.seed);
        break;
      case PartitionScheme::Shards:
        partition_ = partition_shards(train_.labels, m, static_cast<std::size_t>(config_.shards_per_client),
                                      config_.seed);
        break;
      case PartitionScheme::Imbalanced:
        partition_ = partition_imbalanced(train_.labels, m, static_cast<std::size_t>(config_.total_shards),
                                          config_.seed);
        break;
    }
    locals_.resize(m);
    for (std::size_t i = 0; i < m; ++i)
      locals_[i] = LocalObjective{&objectives_.front(), &train_, partition_.assignments[i]};
    train_all_ = all_indices(train_);
  }

  void load_data() {
    auto split = [](const std::string& list) {
      std::vector<std::string> out;
      std::stringstream ss(list);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!detail::trim(item).empty()) out.push_back(detail::trim(item));
      return out;
    };
    Dataset full;
    bool have_test = false;
    switch (config_.source) {
      case DataSource::Synthetic:
        full = synth_mixture(config_.classes, config_.per_class, config_.dim, config_.separation, config_.data_seed,
                             config_.offset);
        break;
      case DataSource::Idx:
        full = load_idx(config_.train_images, config_.train_labels);
        if (!config_.test_images.empty()) {
          test_ = load_idx(config_.test_images, config_.test_labels);
          have_test = true;
        }
        break;
      case DataSource::Cifar:
        full = load_cifar_bin(split(config_.cifar_train));
        if (!config_.cifar_test.empty()) {
          test_ = load_cifar_bin(split(config_.cifar_test));
          have_test = true;
        }
        break;
    }
    if (have_test) {
      train_ = std::move(full);
      test_.classes = std::max(test_.classes, train_.classes);
      train_.classes = test_.classes;
    } else {
      auto [tr, te] = split_train_test(full, config_.test_fraction, config_.data_seed);
      train_ = std::move(tr);
      test_ = std::move(te);
    }
    validate(train_);
    validate(test_);
  }

  void init_state() {
    Rng rng = make_rng(config_.seed, Stream::Init);
    std::uniform_real_distribution<double> uni(-config_.init_scale, config_.init_scale);
    ParamVector theta0(static_cast<Eigen::Index>(dim_));
    for (Eigen::Index k = 0; k < theta0.size(); ++k) theta0[k] = config_.init_scale > 0 ? uni(rng) : 0.0;
    clients_.clear();
    clients_.reserve(static_cast<std::size_t>(config_.m));
    const auto batch = static_cast<std::size_t>(config_.batch_size);
    for (int i = 0; i < config_.m; ++i) {
      clients_.push_back(make_client(i, theta0, config_.epochs, config_.client_lr, batch));
      if (strategy_.kind == StrategyKind::Scaffold) clients_.back().control = ParamVector::Zero(theta0.size());
    }
    server_.theta = theta0;
    server_.eta = config_.eta;
    server_.rho = config_.rho;
    server_.round = 0;
    if (strategy_.kind == StrategyKind::Scaffold) server_.control = ParamVector::Zero(theta0.size());
  }

  void init_analysis() {
    if (config_.model == ModelKind::Quadratic) {
      double L = 0;
      for (const auto& obj : objectives_) L = std::max(L, lipschitz_bound(obj, no_data()).value);
      lipschitz_ = L;
      consensus_ = quadratic_consensus(objectives_);
      f_star_ = consensus_->f_star;
    } else {
      double L = 0;
      bool heuristic = false;
      for (const auto& f : locals_) {
        const auto b = lipschitz_bound(*f.model, train_, f.shard);
        L = std::max(L, b.value);
        heuristic = heuristic || b.heuristic;
      }
      lipschitz_heuristic_ = heuristic;
      if (!heuristic) lipschitz_ = L;
      f_star_ = 0.0;  // cross-entropy plus a non-negative ridge term is >= 0
    }
    if (config_.verify_theorem) {
      if (!lipschitz_) throw InvalidHyperparameter("run.verify_theorem needs a certified Lipschitz constant");
      (void)theorem1_constants(*lipschitz_, config_.rho, p_min());
    }
    if (strategy_.kind != StrategyKind::FedADMM) return;
    last_error_.resize(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) last_error_[i] = local_error(locals_[i], clients_[i]);
    lagrangian0_ = aggregate_lagrangian(clients_, locals_, server_.theta, config_.rho);
    gap0_ = optimality_gap(clients_, locals_, server_.theta, config_.rho);
    gap_sum_ = gap0_;
  }

  void analyse(RoundRecord& rec, const std::vector<int>& active, const std::vector<ClientState>& before,
               const ServerState& current) {
    const double rho = current.rho;
    const auto m = static_cast<double>(config_.m);
    const ParamVector& theta = server_.theta;

    double round_eps = 0;
    bool lemma1 = true;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto id = static_cast<std::size_t>(active[k]);
      const double err_after = local_error(locals_[id], clients_[id]);
      round_eps = std::max(round_eps, err_after);
      if (lipschitz_) {
        const double eps = std::max(err_after, last_error_[id]);
        lemma1 = lemma1 && dual_step_bound_holds(before[k], clients_[id], eps, *lipschitz_);
      }
      last_error_[id] = err_after;
    }
    eps_max_ = std::max(eps_max_, round_eps);
    rec.eps_max = eps_max_;
    if (lipschitz_ && !strategy_.freeze_dual) rec.lemma1_ok = lemma1;

    const double gap = optimality_gap(clients_, locals_, theta, rho);
    const double lagr = aggregate_lagrangian(clients_, locals_, theta, rho);
    rec.gap = gap;
    rec.lagrangian = lagr;

    if (tracking_configured()) {
      ParamVector mean_u = ParamVector::Zero(theta.size());
      for (const auto& c : clients_) mean_u += augmented_model(c, rho);
      mean_u /= m;
      rec.tracking_ok = (theta - mean_u).norm() <= 1e-9;
    }

    if (lipschitz_ && f_star_ && rho >= 2 * *lipschitz_ && !strategy_.freeze_dual) {
      double sum_eps = 0;
      for (double e : last_error_) sum_eps += e;
      rec.lemma3_ok = lagrangian_lower_bound_holds(lagr, *f_star_, sum_eps, *lipschitz_);
    }

    if (lipschitz_ && f_star_ && tracking_configured() && rho > rho_threshold(*lipschitz_)) {
      const int T = rec.round;  // V^0 .. V^{T-1} accumulated so far
      const auto k = theorem1_constants(*lipschitz_, rho, p_min(), eps_max_);
      const double bound = theorem1_bound(k, lagrangian0_, *f_star_, config_.m, T);
      rec.theorem_ok = leq_with_slack(gap_sum_ / (m * T), bound);
    }
    gap_sum_ += gap;
  }

  ExperimentConfig config_;
  Strategy strategy_;
  Dataset train_, test_;
  Batch train_all_;
  Partition partition_;
  std::vector<Objective> objectives_;
  std::vector<LocalObjective> locals_;
  std::vector<ClientState> clients_;
  ServerState server_;
  std::size_t dim_ = 0;
  std::size_t bytes_up_cum_ = 0, bytes_down_cum_ = 0;

  std::optional<double> lipschitz_;
  bool lipschitz_heuristic_ = false;
  std::optional<double> f_star_;
  std::optional<ConsensusSolution> consensus_;
  std::vector<double> last_error_;
  double lagrangian0_ = 0, gap0_ = 0, gap_sum_ = 0, eps_max_ = 0;
};

/// Runs config.rounds rounds (stopping after the first round at target
/// accuracy when early_stop is set), reporting each record to `on_record`.
inline std::vector<RoundRecord> simulate(World& world,
                                         const std::function<void(const RoundRecord&)>& on_record = {}) {
  const auto& cfg = world.config();
  std::vector<RoundRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int t = 0; t < cfg.rounds; ++t) {
    records.push_back(world.run_round());
    if (on_record) on_record(records.back());
    if (cfg.early_stop && records.back().test_acc && *records.back().test_acc >= cfg.target_accuracy) break;
  }
  return records;
}

inline std::vector<RoundRecord> simulate(const ExperimentConfig& cfg,
                                         const std::function<void(const RoundRecord&)>& on_record = {}) {
  World world(cfg);
  return simulate(world, on_record);
}

struct RunArtifact {
  std::filesystem::path dir;
  std::vector<RoundRecord> records;
};

inline std::string run_dir_name(const ExperimentConfig& cfg) {
  return config_hash(cfg) + "-s" + std::to_string(cfg.seed);
}

namespace detail {
inline std::string csv_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}
}  // namespace detail

/// Writes <out_root>/<config-hash>-s<seed>/{config.echo, rounds.jsonl,
/// summary.csv, timing.csv}. Wall-clock times live only in timing.csv so
/// rounds.jsonl is reproducible byte for byte.
inline RunArtifact run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  World world(cfg);
  RunArtifact art;
  art.dir = out_root / run_dir_name(cfg);
  std::error_code ec;
  fs::create_directories(art.dir, ec);
  if (ec) throw IoError("cannot create run directory (" + ec.message() + ")", art.dir.string());

  auto open = [&](const char* name) {
    std::ofstream out(art.dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write", (art.dir / name).string());
    return out;
  };
  {
    auto echo = open("config.echo");
    echo << echo_config(cfg);
  }
  auto jsonl = open("rounds.jsonl");
  auto summary = open("summary.csv");
  auto timing = open("timing.csv");
  summary << "round,train_loss,test_acc,V_t,bytes_up_cum,bytes_down_cum\n";
  timing << "round,wall_seconds\n";
  art.records = simulate(world, [&](const RoundRecord& r) {
    jsonl << to_json(r).dump() << '\n';
    summary << r.round << ',' << detail::format_double(r.train_loss) << ',' << detail::csv_opt(r.test_acc) << ','
            << detail::csv_opt(r.gap) << ',' << r.bytes_up_cum << ',' << r.bytes_down_cum << '\n';
    timing << r.round << ',' << r.wall_seconds << '\n';
  });
  jsonl.flush();
  summary.flush();
  if (!jsonl || !summary) throw IoError("write failure", art.dir.string());
  return art;
}

inline std::vector<RoundRecord> read_records(const std::filesystem::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw IoError("cannot open", jsonl_path.string());
  std::vector<RoundRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corrupt record at line " + std::to_string(line_no) + " (" + e.what() + ")", jsonl_path.string());
    }
  }
  return out;
}

}  // namespace fedadmm
