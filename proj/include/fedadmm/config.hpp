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

// Experiment configuration: a flat "key = value" text format where dotted
// prefixes act as sections. Every key has a default; files and --set
// overrides only change what they name.

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "fedadmm/baselines.hpp"
#include "fedadmm/data.hpp"
#include "fedadmm/error.hpp"

namespace fedadmm {

class UnknownKeyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class TypeMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Step function over rounds: `base` until the first breakpoint, then the
/// value of the latest breakpoint whose round is <= t.
struct Schedule {
  std::vector<std::pair<int, double>> steps;  // ascending rounds

  double at(int round, double base) const {
    double v = base;
    for (const auto& [r, value] : steps) {
      if (r > round) break;
      v = value;
    }
    return v;
  }
  bool empty() const noexcept { return steps.empty(); }
  bool operator==(const Schedule&) const = default;
};

enum class EtaRule { Constant, Participation };
enum class SamplingScheme { Uniform, Bernoulli };
enum class DataSource { Synthetic, Idx, Cifar };
enum class ModelKind { Logistic, SmallNet, Quadratic };

struct ExperimentConfig {
  // strategy
  StrategyKind strategy = StrategyKind::FedADMM;
  double rho = 0.01;
  Schedule rho_schedule;
  bool freeze_dual = false;
  bool exact_local = false;
  bool suppress_control = false;
  double server_lr = 0.1;
  double scaffold_server_lr = 1.0;
  // server
  double eta = 1.0;
  EtaRule eta_rule = EtaRule::Constant;
  Schedule eta_schedule;
  // client
  double client_lr = 0.1;
  int epochs = 5;
  int batch_size = 10;  // 0: full batch
  bool heterogeneous = true;
  // population
  int m = 100;
  double fraction = 0.1;
  SamplingScheme sampling = SamplingScheme::Uniform;
  // run
  int rounds = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  double target_accuracy = 0.8;
  bool early_stop = false;
  bool verify = false;
  bool verify_theorem = false;
  // data
  DataSource source = DataSource::Synthetic;
  int classes = 10;
  int per_class = 1000;
  int dim = 50;
  double separation = 3.0;
  double offset = 0.0;
  double test_fraction = 0.2;
  std::uint64_t data_seed = 1;  // synthetic draw and train/test split, fixed across run seeds
  std::string train_images, train_labels, test_images, test_labels;
  std::string cifar_train, cifar_test;  // comma-separated paths
  PartitionScheme partition = PartitionScheme::Shards;
  int shards_per_client = 2;
  int total_shards = 10000;
  // model
  ModelKind model = ModelKind::Logistic;
  int hidden = 32;
  double l2 = 0.0;
  double declared_lipschitz = 10.0;
  double init_scale = 0.01;
  // quadratic ensemble
  int quad_dim = 5;
  double curvature_min = 0.1;
  double curvature_max = 1.0;
  double center_scale = 3.0;
  bool diagonal = false;
  std::uint64_t quad_seed = 1;  // ensemble is fixed across run seeds

  Strategy strategy_spec() const {
    Strategy s;
    s.kind = strategy;
    s.rho = rho;
    s.server_lr = server_lr;
    s.scaffold_server_lr = scaffold_server_lr;
    s.freeze_dual = freeze_dual;
    s.exact_local = exact_local;
    s.suppress_control = suppress_control;
    return s;
  }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
    throw TypeMismatchError("key '" + key + "': expected a number, got '" + text + "'");
  return v;
}

template <class T>
T parse_integral(const std::string& key, const std::string& text) {
  T v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec == std::errc::result_out_of_range)
    throw TypeMismatchError("key '" + key + "': integer out of range, got '" + text + "'");
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw TypeMismatchError("key '" + key + "': expected " +
                            (std::is_unsigned_v<T> ? "a non-negative integer" : "an integer") + ", got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw TypeMismatchError("key '" + key + "': expected true|false, got '" + text + "'");
}

inline Schedule parse_schedule(const std::string& key, const std::string& text) {
  Schedule s;
  if (text.empty() || text == "none") return s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw TypeMismatchError("key '" + key + "': schedule entries are round:value, got '" + item + "'");
    const auto round = parse_integral<int>(key, trim(item.substr(0, colon)));
    const auto value = parse_double(key, trim(item.substr(colon + 1)));
    if (round < 0) throw ConfigError("key '" + key + "': schedule rounds must be >= 0");
    s.steps.emplace_back(static_cast<int>(round), value);
  }
  std::sort(s.steps.begin(), s.steps.end());
  for (std::size_t i = 1; i < s.steps.size(); ++i)
    if (s.steps[i].first == s.steps[i - 1].first)
      throw TypeMismatchError("key '" + key + "': round " + std::to_string(s.steps[i].first) + " listed twice");
  return s;
}

inline std::string format_schedule(const Schedule& s) {
  if (s.empty()) return "none";
  std::string out;
  for (const auto& [r, v] : s.steps) {
    if (!out.empty()) out += ",";
    out += std::to_string(r) + ":" + format_double(v);
  }
  return out;
}

template <class Enum>
struct EnumNames {
  std::vector<std::pair<Enum, std::string_view>> names;

  Enum parse(const std::string& key, const std::string& text) const {
    for (const auto& [e, n] : names)
      if (n == text) return e;
    std::string allowed;
    for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : "|") + std::string(n);
    throw TypeMismatchError("key '" + key + "': expected one of " + allowed + ", got '" + text + "'");
  }
  std::string format(Enum v) const {
    for (const auto& [e, n] : names)
      if (e == v) return std::string(n);
    return "?";
  }
};

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field number_field(std::string key, T ExperimentConfig::*member) {
  Field f;
  f.key = key;
  f.get = [member](const ExperimentConfig& c) {
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  f.set = [member, key](ExperimentConfig& c, const std::string& v) {
    if constexpr (std::is_floating_point_v<T>) {
      c.*member = parse_double(key, v);
    } else {
      c.*member = parse_integral<T>(key, v);
    }
  };
  return f;
}

inline Field bool_field(std::string key, bool ExperimentConfig::*member) {
  return Field{key, [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); },
               [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(key, v); }};
}

inline Field string_field(std::string key, std::string ExperimentConfig::*member) {
  return Field{key, [member](const ExperimentConfig& c) { return c.*member; },
               [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

inline Field schedule_field(std::string key, Schedule ExperimentConfig::*member) {
  return Field{key, [member](const ExperimentConfig& c) { return format_schedule(c.*member); },
               [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_schedule(key, v); }};
}

template <class Enum>
Field enum_field(std::string key, Enum ExperimentConfig::*member, EnumNames<Enum> names) {
  return Field{key, [member, names](const ExperimentConfig& c) { return names.format(c.*member); },
               [member, names, key](ExperimentConfig& c, const std::string& v) { c.*member = names.parse(key, v); }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ExperimentConfig;
    const EnumNames<StrategyKind> strategies{{{StrategyKind::FedSGD, "fedsgd"},
                                              {StrategyKind::FedAvg, "fedavg"},
                                              {StrategyKind::FedProx, "fedprox"},
                                              {StrategyKind::Scaffold, "scaffold"},
                                              {StrategyKind::FedADMM, "fedadmm"}}};
    const EnumNames<EtaRule> eta_rules{{{EtaRule::Constant, "constant"}, {EtaRule::Participation, "participation"}}};
    const EnumNames<SamplingScheme> sampling{
        {{SamplingScheme::Uniform, "uniform"}, {SamplingScheme::Bernoulli, "bernoulli"}}};
    const EnumNames<DataSource> sources{
        {{DataSource::Synthetic, "synthetic"}, {DataSource::Idx, "idx"}, {DataSource::Cifar, "cifar"}}};
    const EnumNames<PartitionScheme> partitions{{{PartitionScheme::IID, "iid"},
                                                 {PartitionScheme::Shards, "shards"},
                                                 {PartitionScheme::Imbalanced, "imbalanced"}}};
    const EnumNames<ModelKind> models{
        {{ModelKind::Logistic, "logistic"}, {ModelKind::SmallNet, "smallnet"}, {ModelKind::Quadratic, "quadratic"}}};
    return std::vector<Field>{
        enum_field("strategy.kind", &C::strategy, strategies),
        number_field("strategy.rho", &C::rho),
        schedule_field("strategy.rho_schedule", &C::rho_schedule),
        bool_field("strategy.freeze_dual", &C::freeze_dual),
        bool_field("strategy.exact_local", &C::exact_local),
        bool_field("strategy.suppress_control", &C::suppress_control),
        number_field("strategy.server_lr", &C::server_lr),
        number_field("strategy.scaffold_server_lr", &C::scaffold_server_lr),
        number_field("server.eta", &C::eta),
        enum_field("server.eta_rule", &C::eta_rule, eta_rules),
        schedule_field("server.eta_schedule", &C::eta_schedule),
        number_field("client.lr", &C::client_lr),
        number_field("client.epochs", &C::epochs),
        number_field("client.batch_size", &C::batch_size),
        bool_field("client.heterogeneous", &C::heterogeneous),
        number_field("clients.m", &C::m),
        number_field("clients.fraction", &C::fraction),
        enum_field("clients.sampling", &C::sampling, sampling),
        number_field("run.rounds", &C::rounds),
        number_field("run.seed", &C::seed),
        number_field("run.threads", &C::threads),
        number_field("run.target_accuracy", &C::target_accuracy),
        bool_field("run.early_stop", &C::early_stop),
        bool_field("run.verify", &C::verify),
        bool_field("run.verify_theorem", &C::verify_theorem),
        enum_field("data.source", &C::source, sources),
        number_field("data.classes", &C::classes),
        number_field("data.per_class", &C::per_class),
        number_field("data.dim", &C::dim),
        number_field("data.separation", &C::separation),
        number_field("data.offset", &C::offset),
        number_field("data.test_fraction", &C::test_fraction),
        number_field("data.seed", &C::data_seed),
        string_field("data.train_images", &C::train_images),
        string_field("data.train_labels", &C::train_labels),
        string_field("data.test_images", &C::test_images),
        string_field("data.test_labels", &C::test_labels),
        string_field("data.cifar_train", &C::cifar_train),
        string_field("data.cifar_test", &C::cifar_test),
        enum_field("data.partition", &C::partition, partitions),
        number_field("data.shards_per_client", &C::shards_per_client),
        number_field("data.total_shards", &C::total_shards),
        enum_field("model.kind", &C::model, models),
        number_field("model.hidden", &C::hidden),
        number_field("model.l2", &C::l2),
        number_field("model.lipschitz", &C::declared_lipschitz),
        number_field("model.init_scale", &C::init_scale),
        number_field("quadratic.dim", &C::quad_dim),
        number_field("quadratic.curvature_min", &C::curvature_min),
        number_field("quadratic.curvature_max", &C::curvature_max),
        number_field("quadratic.center_scale", &C::center_scale),
        bool_field("quadratic.diagonal", &C::diagonal),
        number_field("quadratic.seed", &C::quad_seed),
    };
  }();
  return table;
}

inline const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw UnknownKeyError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Sets one dotted key from its textual value.
inline void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  detail::field(key).set(cfg, value);
}

inline std::string get_value(const ExperimentConfig& cfg, const std::string& key) {
  return detail::field(key).get(cfg);
}

/// Applies "key = value" lines on top of `cfg`. '#' starts a comment. A
/// "[section]" header prefixes following keys with "section.".
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  std::stringstream ss{std::string(text)};
  std::string line, section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw TypeMismatchError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    set_value(cfg, key, detail::trim(line.substr(eq + 1)));
  }
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file", path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(base, buf.str());
  return base;
}

/// Applies a "key=value" override.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw TypeMismatchError("override '" + assignment + "' is not key=value");
  set_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Every key in declaration order; parsing the result reproduces `cfg`.
inline std::string echo_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// FNV-1a over the echo, excluding the seed and thread count.
inline std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.seed = 0;
  c.threads = 1;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : echo_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Cross-field constraints, each failure naming the key to change.
inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(c.fraction > 0 && c.fraction <= 1, "clients.fraction must lie in (0, 1]");
  require(c.rounds >= 1, "run.rounds must be >= 1");
  require(c.m >= 1, "clients.m must be >= 1");
  require(c.threads >= 1, "run.threads must be >= 1");
  require(c.epochs >= 1, "client.epochs must be >= 1");
  require(c.batch_size >= 0, "client.batch_size must be >= 0 (0 = full batch)");
  require(c.client_lr > 0, "client.lr must be > 0");
  require(c.eta > 0, "server.eta must be > 0");
  require(c.init_scale >= 0, "model.init_scale must be >= 0");
  require(c.l2 >= 0, "model.l2 must be >= 0");
  if (c.strategy == StrategyKind::FedADMM) {
    require(c.rho > 0, "strategy.rho must be > 0 for fedadmm");
    for (const auto& [r, v] : c.rho_schedule.steps) require(v > 0, "strategy.rho_schedule values must be > 0");
  }
  if (c.strategy == StrategyKind::FedProx) require(c.rho >= 0, "strategy.rho must be >= 0 for fedprox");
  for (const auto& [r, v] : c.eta_schedule.steps) require(v > 0, "server.eta_schedule values must be > 0");
  require(!c.exact_local || (c.model == ModelKind::Quadratic && c.strategy == StrategyKind::FedADMM),
          "strategy.exact_local requires model.kind = quadratic and strategy.kind = fedadmm");
  if (c.sampling == SamplingScheme::Uniform)
    require(std::ceil(c.fraction * c.m - 1e-9) >= 1, "clients.fraction * clients.m must select at least one client");
  if (c.model == ModelKind::Quadratic) {
    require(c.quad_dim >= 1, "quadratic.dim must be >= 1");
    require(c.curvature_min >= 0 && c.curvature_max >= c.curvature_min,
            "quadratic curvature range must satisfy 0 <= curvature_min <= curvature_max");
  } else {
    require(c.test_fraction > 0 && c.test_fraction < 1, "data.test_fraction must lie in (0, 1)");
    if (c.source == DataSource::Synthetic) {
      require(c.classes >= 2, "data.classes must be >= 2");
      require(c.per_class >= 1 && c.dim >= 1, "data.per_class and data.dim must be >= 1");
    }
    if (c.source == DataSource::Idx)
      require(!c.train_images.empty() && !c.train_labels.empty(),
              "data.train_images and data.train_labels are required for data.source = idx");
    if (c.source == DataSource::Cifar) require(!c.cifar_train.empty(), "data.cifar_train is required for data.source = cifar");
    require(c.shards_per_client >= 1, "data.shards_per_client must be >= 1");
    if (c.partition == PartitionScheme::Imbalanced) require(c.m % 2 == 0, "imbalanced partition needs an even clients.m");
    if (c.model == ModelKind::SmallNet) require(c.hidden >= 1, "model.hidden must be >= 1");
  }
}

}  // namespace fedadmm
