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

// Rounds-to-target tables over finished run directories.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedadmm/config.hpp"
#include "fedadmm/sim.hpp"

namespace fedadmm {

struct RunSummary {
  std::filesystem::path dir;
  std::string strategy;
  std::uint64_t seed = 0;
  int rounds = 0;  // configured horizon
  std::optional<int> rounds_to_target;
};

struct SummaryRow {
  std::string strategy;
  std::size_t runs = 0;
  std::size_t reached = 0;
  int horizon = 0;
  std::optional<double> median_rounds;  // over runs that reached the target
  std::optional<double> speedup;        // reference median / this median
  std::optional<double> reduction;      // 1 - this / best other strategy (FedADMM row only)
};

struct SummaryTable {
  double target = 0;
  std::string reference;
  bool has_reduction = false;
  std::vector<SummaryRow> rows;
  std::size_t excluded = 0;  // runs that never reached the target
};

inline RunSummary summarize_run(const std::filesystem::path& dir, std::optional<double> target) {
  if (!std::filesystem::exists(dir / "rounds.jsonl")) throw IoError("missing rounds.jsonl", dir.string());
  const auto cfg = load_config((dir / "config.echo").string());
  const auto records = read_records(dir / "rounds.jsonl");
  if (records.empty()) throw IoError("no round records", (dir / "rounds.jsonl").string());
  RunSummary s;
  s.dir = dir;
  s.strategy = std::string(to_string(cfg.strategy));
  s.seed = cfg.seed;
  s.rounds = cfg.rounds;
  s.rounds_to_target = rounds_to_target(records, target.value_or(cfg.target_accuracy));
  return s;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median rounds-to-target per strategy (runs that never reached the target
/// are excluded and counted), speedup relative to `reference`, and FedADMM's
/// reduction relative to the best other strategy. Pure in the run files.
inline SummaryTable summarize(const std::vector<std::filesystem::path>& run_dirs, std::optional<double> target = {},
                              const std::string& reference = "fedsgd") {
  if (run_dirs.empty()) throw ConfigError("summarize needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(summarize_run(d, target));

  SummaryTable table;
  table.reference = reference;
  if (target) {
    table.target = *target;
  } else {
    table.target = load_config((run_dirs.front() / "config.echo").string()).target_accuracy;
  }

  std::vector<std::string> order;
  for (const auto& r : runs)
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
  for (const auto& name : order) {
    SummaryRow row;
    row.strategy = name;
    std::vector<double> reached;
    for (const auto& r : runs) {
      if (r.strategy != name) continue;
      ++row.runs;
      row.horizon = std::max(row.horizon, r.rounds);
      if (r.rounds_to_target) {
        reached.push_back(*r.rounds_to_target);
      } else {
        ++table.excluded;
      }
    }
    row.reached = reached.size();
    if (!reached.empty()) row.median_rounds = median(reached);
    table.rows.push_back(row);
  }

  const SummaryRow* ref = nullptr;
  for (const auto& row : table.rows)
    if (row.strategy == reference) ref = &row;
  if (ref && ref->median_rounds)
    for (auto& row : table.rows)
      if (row.median_rounds) row.speedup = *ref->median_rounds / *row.median_rounds;

  if (table.rows.size() > 1) {
    std::optional<double> best_other;
    for (const auto& row : table.rows)
      if (row.strategy != "fedadmm" && row.median_rounds)
        best_other = best_other ? std::min(*best_other, *row.median_rounds) : *row.median_rounds;
    for (auto& row : table.rows) {
      if (row.strategy != "fedadmm") continue;
      table.has_reduction = true;
      if (row.median_rounds && best_other) row.reduction = 1.0 - *row.median_rounds / *best_other;
    }
  }
  return table;
}

namespace detail {
inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
inline std::string rounds_cell(const SummaryRow& row) {
  if (!row.median_rounds) return std::to_string(row.horizon) + "+";
  const double m = *row.median_rounds;
  return m == static_cast<double>(static_cast<long long>(m)) ? std::to_string(static_cast<long long>(m))
                                                               : fmt("%.1f", m);
}
}  // namespace detail

inline std::string format_speedup(double s) { return detail::fmt("%.1f", s) + "×"; }
inline std::string format_reduction(double r) { return detail::fmt("%.1f", 100.0 * r) + "%"; }

inline std::string render_text(const SummaryTable& t) {
  std::ostringstream out;
  out << "target accuracy " << detail::fmt("%.4g", t.target) << ", speedup relative to " << t.reference << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %5s %8s %10s %10s", "strategy", "runs", "reached", "rounds", "speedup");
  out << line << (t.has_reduction ? "  reduction" : "") << "\n";
  for (const auto& row : t.rows) {
    const std::string rounds = detail::rounds_cell(row) + (row.reached < row.runs && row.median_rounds ? "*" : "");
    std::snprintf(line, sizeof line, "%-10s %5zu %8zu %10s %10s", row.strategy.c_str(), row.runs, row.reached,
                  rounds.c_str(), row.speedup ? format_speedup(*row.speedup).c_str() : "-");
    out << line;
    if (t.has_reduction) out << "  " << (row.reduction ? format_reduction(*row.reduction) : std::string("-"));
    out << "\n";
  }
  if (t.excluded > 0)
    out << "* " << t.excluded << " run(s) never reached the target and are excluded from the medians; "
        << "N+ means no run reached it within N rounds\n";
  return out.str();
}

inline std::string render_csv(const SummaryTable& t) {
  std::ostringstream out;
  out << "strategy,runs,reached,median_rounds,speedup" << (t.has_reduction ? ",reduction_pct" : "") << "\n";
  for (const auto& row : t.rows) {
    out << row.strategy << ',' << row.runs << ',' << row.reached << ',' << detail::rounds_cell(row) << ','
        << (row.speedup ? detail::fmt("%.4f", *row.speedup) : "");
    if (t.has_reduction) out << ',' << (row.reduction ? detail::fmt("%.2f", 100.0 * *row.reduction) : "");
    out << "\n";
  }
  return out.str();
}

}  // namespace fedadmm
