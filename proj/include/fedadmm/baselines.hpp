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

// FedSGD, FedAvg, FedProx and SCAFFOLD behind the same local-step /
// aggregate interface as FedADMM.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedadmm/core.hpp"
#include "fedadmm/error.hpp"
#include "fedadmm/model.hpp"
#include "fedadmm/rng.hpp"

namespace fedadmm {

enum class StrategyKind { FedSGD, FedAvg, FedProx, Scaffold, FedADMM };

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::FedSGD: return "fedsgd";
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FedProx: return "fedprox";
    case StrategyKind::Scaffold: return "scaffold";
    case StrategyKind::FedADMM: return "fedadmm";
  }
  return "unknown";
}

inline StrategyKind parse_strategy(std::string_view name) {
  for (auto k : {StrategyKind::FedSGD, StrategyKind::FedAvg, StrategyKind::FedProx, StrategyKind::Scaffold,
                 StrategyKind::FedADMM})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected fedsgd|fedavg|fedprox|scaffold|fedadmm)");
}

struct Strategy {
  StrategyKind kind = StrategyKind::FedADMM;
  double rho = 0.01;               // FedProx / FedADMM proximal coefficient
  double server_lr = 0.1;          // FedSGD server learning rate
  double scaffold_server_lr = 1.0; // SCAFFOLD global step eta_g
  bool freeze_dual = false;        // FedADMM: y pinned at 0 (FedProx compatibility)
  bool exact_local = false;        // FedADMM: closed-form local solve (quadratic only)
  bool suppress_control = false;   // SCAFFOLD: control variates stay at zero

  bool draws_epochs() const noexcept {
    return kind == StrategyKind::FedProx || kind == StrategyKind::FedADMM;
  }
};

inline void validate(const Strategy& s) {
  switch (s.kind) {
    case StrategyKind::FedADMM:
      if (!(s.rho > 0)) throw ConfigError("fedadmm requires rho > 0");
      break;
    case StrategyKind::FedProx:
      if (s.rho < 0) throw ConfigError("fedprox requires rho >= 0");
      break;
    case StrategyKind::FedSGD:
      if (!(s.server_lr > 0)) throw ConfigError("fedsgd requires server_lr > 0");
      break;
    case StrategyKind::Scaffold:
      if (!(s.scaffold_server_lr > 0)) throw ConfigError("scaffold requires a positive server step");
      break;
    case StrategyKind::FedAvg:
      break;
  }
}

/// One or two vectors uploaded by a client (SCAFFOLD sends two).
struct LocalMessage {
  int client = 0;
  std::vector<ParamVector> vectors;
};

struct LocalResult {
  ClientState state;
  LocalMessage message;
  int steps = 0;
};

namespace detail {

inline int plain_sgd(const LocalObjective& f, ParamVector& w, double lr, int epochs, std::size_t batch_size, Rng& rng,
                     int client_id) {
  int steps = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& batch : make_batches(f.shard, batch_size, rng)) {
      w -= lr * f.solver_grad(w, batch, client_id, epoch + 1);
      ++steps;
    }
    if (!w.allFinite()) throw DivergenceError(client_id, epoch + 1);
  }
  return steps;
}

inline int corrected_sgd(const LocalObjective& f, ParamVector& w, const ParamVector& c_client,
                         const ParamVector& c_server, double lr, int epochs, std::size_t batch_size, Rng& rng,
                         int client_id) {
  int steps = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& batch : make_batches(f.shard, batch_size, rng)) {
      w -= lr * (f.solver_grad(w, batch, client_id, epoch + 1) - c_client + c_server);
      ++steps;
    }
    if (!w.allFinite()) throw DivergenceError(client_id, epoch + 1);
  }
  return steps;
}

}  // namespace detail

/// Local work of one active client. `server.rho` is the proximal coefficient
/// in effect this round.
inline LocalResult local_step(const Strategy& strategy, const ClientState& client, const LocalObjective& f,
                              const ServerState& server, int epochs, Rng& rng) {
  const ParamVector& theta = server.theta;
  LocalResult out{client, {client.id, {}}, 0};
  switch (strategy.kind) {
    case StrategyKind::FedSGD: {
      out.message.vectors.push_back(f.grad(theta));
      out.steps = 1;
      break;
    }
    case StrategyKind::FedAvg: {
      out.state.w = theta;
      out.steps = detail::plain_sgd(f, out.state.w, client.lr, epochs, client.batch_size, rng, client.id);
      out.message.vectors.push_back(out.state.w - theta);
      break;
    }
    case StrategyKind::FedProx: {
      out.state.w = theta;
      const ParamVector zero = ParamVector::Zero(theta.size());
      out.steps = prox_sgd(f, out.state.w, zero, theta, server.rho, client.lr, epochs, client.batch_size, rng,
                           client.id);
      out.message.vectors.push_back(out.state.w - theta);
      break;
    }
    case StrategyKind::Scaffold: {
      const ParamVector c_server =
          server.control.size() == theta.size() ? server.control : ParamVector::Zero(theta.size());
      const ParamVector c_client =
          client.control.size() == theta.size() ? client.control : ParamVector::Zero(theta.size());
      out.state.w = theta;
      out.steps =
          detail::corrected_sgd(f, out.state.w, c_client, c_server, client.lr, epochs, client.batch_size, rng, client.id);
      ParamVector c_next = c_client;
      if (!strategy.suppress_control)
        c_next = c_client - c_server + (theta - out.state.w) / (static_cast<double>(out.steps) * client.lr);
      out.message.vectors.push_back(out.state.w - theta);
      out.message.vectors.push_back(c_next - c_client);
      out.state.control = std::move(c_next);
      break;
    }
    case StrategyKind::FedADMM: {
      const double rho = server.rho;
      ClientState before = client;
      if (strategy.exact_local) {
        out.state = client_update_exact_quadratic(client, f, theta, rho);
        out.steps = 1;
      } else {
        const auto mode = strategy.freeze_dual ? DualMode::Frozen : DualMode::Active;
        if (mode == DualMode::Frozen) {
          before.w = theta;
          before.y.setZero(theta.size());
        }
        auto solve = client_update_sgd(client, f, theta, rho, epochs, rng, mode);
        out.state = std::move(solve.state);
        out.steps = solve.steps;
      }
      out.message.vectors.push_back(update_message(before, out.state, rho));
      break;
    }
  }
  return out;
}

/// Server step from the active set's messages (ascending client id).
/// `m` is the total client population.
inline ServerState aggregate(const Strategy& strategy, const ServerState& server, std::span<const LocalMessage> messages,
                             int m) {
  if (messages.empty()) {
    ServerState next = server;
    ++next.round;
    return next;
  }
  const auto d = server.theta.size();
  std::vector<ParamVector> first;
  first.reserve(messages.size());
  for (const auto& msg : messages) {
    if (msg.vectors.empty() || msg.vectors.front().size() != d) throw ConfigError("malformed client message");
    first.push_back(msg.vectors.front());
  }
  switch (strategy.kind) {
    case StrategyKind::FedADMM:
      return server_aggregate(server, first);
    case StrategyKind::FedAvg:
    case StrategyKind::FedProx: {
      ServerState unit = server;
      unit.eta = 1.0;
      ServerState next = server_aggregate(unit, first);
      next.eta = server.eta;
      return next;
    }
    case StrategyKind::FedSGD: {
      ParamVector sum = ParamVector::Zero(d);
      for (const auto& g : first) sum += g;
      ServerState next = server;
      next.theta = server.theta - strategy.server_lr * (sum / static_cast<double>(first.size()));
      ++next.round;
      return next;
    }
    case StrategyKind::Scaffold: {
      ParamVector dw = ParamVector::Zero(d), dc = ParamVector::Zero(d);
      for (const auto& msg : messages) {
        if (msg.vectors.size() != 2) throw ConfigError("scaffold message must carry two vectors");
        dw += msg.vectors[0];
        dc += msg.vectors[1];
      }
      const double s = static_cast<double>(messages.size());
      ServerState next = server;
      next.theta = server.theta + strategy.scaffold_server_lr * (dw / s);
      const ParamVector c = server.control.size() == static_cast<Eigen::Index>(d) ? server.control
                                                                                   : ParamVector::Zero(d);
      next.control = c + (s / static_cast<double>(m)) * (dc / s);
      ++next.round;
      return next;
    }
  }
  throw ConfigError("unhandled strategy");
}

struct MessageBytes {
  std::size_t up = 0;
  std::size_t down = 0;
};

/// Per-active-client bytes at 8 bytes per coordinate. SCAFFOLD moves the
/// control variate alongside the model in both directions.
inline MessageBytes message_bytes(StrategyKind kind, std::size_t d) {
  if (d < 1) throw ConfigError("model dimension must be >= 1");
  const std::size_t one = 8 * d;
  if (kind == StrategyKind::Scaffold) return {2 * one, 2 * one};
  return {one, one};
}

}  // namespace fedadmm
