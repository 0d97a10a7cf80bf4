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

// Command-line entry point: run | partition | summarize | check.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedadmm/fedadmm.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kNumeric = 3,
  kIo = 4,
  kUnknownKey = 5,
  kTypeMismatch = 6,
};

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

fedadmm::ExperimentConfig resolve(const ConfigArgs& args) {
  fedadmm::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = fedadmm::load_config(args.config_path);
  for (const auto& o : args.overrides) fedadmm::apply_override(cfg, o);
  fedadmm::validate(cfg);
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw fedadmm::TypeMismatchError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (seeds.empty()) throw fedadmm::ConfigError("--seeds must name at least one seed");
  return seeds;
}

std::filesystem::path default_out_root() {
  if (const char* env = std::getenv("FEDADMM_OUT"); env && *env) return env;
  return "runs";
}

int cmd_run(const ConfigArgs& args, const std::string& seeds, const std::string& out, int threads) {
  auto cfg = resolve(args);
  if (threads > 0) cfg.threads = threads;
  const auto root = out.empty() ? default_out_root() : std::filesystem::path(out);
  const auto seed_list = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seeds(seeds);
  for (auto seed : seed_list) {
    cfg.seed = seed;
    const auto art = fedadmm::run_experiment(cfg, root);
    const auto& last = art.records.back();
    const auto hit = fedadmm::rounds_to_target(art.records, cfg.target_accuracy);
    std::cout << art.dir.string() << "  rounds=" << art.records.size() << "  train_loss=" << last.train_loss;
    if (last.test_acc) std::cout << "  test_acc=" << *last.test_acc;
    if (last.test_acc)
      std::cout << "  rounds_to_target=" << fedadmm::format_rounds_to_target(hit, art.records.size());
    std::cout << "\n";
  }
  return kOk;
}

int cmd_partition(const ConfigArgs& args, bool per_client) {
  const auto cfg = resolve(args);
  if (cfg.model == fedadmm::ModelKind::Quadratic) throw fedadmm::ConfigError("quadratic ensembles have no data partition");
  fedadmm::World world(cfg);
  const auto& part = world.partition();
  nlohmann::ordered_json j;
  j["scheme"] = std::string(fedadmm::to_string(part.scheme));
  j["clients"] = part.clients();
  j["samples"] = world.train().size();
  j["mean"] = part.stats.mean;
  j["stdev"] = part.stats.stdev;
  j["min"] = part.stats.min;
  j["max"] = part.stats.max;
  if (per_client) {
    auto& rows = j["per_client"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < part.clients(); ++i) {
      std::set<int> labels;
      for (auto idx : part.assignments[i]) labels.insert(world.train().labels[idx]);
      rows.push_back({{"client", i}, {"size", part.assignments[i].size()}, {"labels", labels}});
    }
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_summarize(const std::vector<std::string>& dirs, double target, const std::string& reference,
                  const std::string& csv_path) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const auto table = fedadmm::summarize(paths, target >= 0 ? std::optional<double>(target) : std::nullopt, reference);
  std::cout << fedadmm::render_text(table);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw fedadmm::IoError("cannot write", csv_path);
    out << fedadmm::render_csv(table);
  }
  return kOk;
}

int cmd_check(const ConfigArgs& args, double lipschitz) {
  auto cfg = resolve(args);
  double L = lipschitz;
  bool heuristic = false;
  double p_min = 0;
  if (L <= 0) {
    cfg.verify = true;
    cfg.verify_theorem = false;
    fedadmm::World world(cfg);
    if (!world.lipschitz()) {
      heuristic = true;
      L = cfg.declared_lipschitz + cfg.l2;
    } else {
      L = *world.lipschitz();
    }
    p_min = world.p_min();
  } else {
    p_min = cfg.sampling == fedadmm::SamplingScheme::Bernoulli
                ? cfg.fraction
                : std::ceil(cfg.fraction * cfg.m - 1e-9) / cfg.m;
  }
  std::cout << "L = " << L << (heuristic ? " (heuristic, not certified)" : "") << "\n"
            << "rho = " << cfg.rho << "\n"
            << "threshold (1+sqrt(5))L = " << fedadmm::rho_threshold(L) << "\n"
            << "p_min = " << p_min << "\n";
  const auto k = fedadmm::theorem1_constants(L, cfg.rho, p_min);
  std::cout << "c1 = " << k.c1 << "\nc2 = " << k.c2 << "\nc3 = " << k.c3 << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated ADMM simulator"};
  app.require_subcommand(1);

  ConfigArgs run_args, part_args, check_args;
  std::string seeds, out_dir;
  int threads = 0;
  auto* run = app.add_subcommand("run", "run an experiment once per seed");
  run->add_option("--config", run_args.config_path, "config file (key = value)");
  run->add_option("--set", run_args.overrides, "override, e.g. strategy.rho=0.01 (repeatable)");
  run->add_option("--seeds", seeds, "comma-separated seeds, one run directory each");
  run->add_option("--out", out_dir, "output root (default $FEDADMM_OUT or ./runs)");
  run->add_option("--threads", threads, "worker threads per round");

  bool per_client = false;
  auto* part = app.add_subcommand("partition", "print partition statistics");
  part->add_option("--config", part_args.config_path, "config file");
  part->add_option("--set", part_args.overrides, "override (repeatable)");
  part->add_flag("--per-client", per_client, "list every client's size and labels");

  std::vector<std::string> dirs;
  double target = -1;
  std::string reference = "fedsgd", csv_path;
  auto* sum = app.add_subcommand("summarize", "rounds-to-target table over run directories");
  sum->add_option("dirs", dirs, "run directories")->required();
  sum->add_option("--target", target, "target accuracy (default: from each run's config)");
  sum->add_option("--reference", reference, "strategy used for the speedup column");
  sum->add_option("--csv", csv_path, "also write the table as CSV");

  double lipschitz = 0;
  auto* check = app.add_subcommand("check", "validate rate-bound hyperparameters and print c1/c2/c3");
  check->add_option("--config", check_args.config_path, "config file");
  check->add_option("--set", check_args.overrides, "override (repeatable)");
  check->add_option("--lipschitz", lipschitz, "use this L instead of computing it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_args, seeds, out_dir, threads);
    if (*part) return cmd_partition(part_args, per_client);
    if (*sum) return cmd_summarize(dirs, target, reference, csv_path);
    if (*check) return cmd_check(check_args, lipschitz);
  } catch (const fedadmm::UnknownKeyError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUnknownKey;
  } catch (const fedadmm::TypeMismatchError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kTypeMismatch;
  } catch (const fedadmm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const fedadmm::DivergenceError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const fedadmm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const fedadmm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fedadmm::ParseError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
