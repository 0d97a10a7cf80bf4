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

// Primal-dual machinery of federated ADMM: the per-client augmented
// Lagrangian, local solvers, dual update, augmented-model update message,
// server tracking step, optimality gap and the convergence-rate bound.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fedadmm/error.hpp"
#include "fedadmm/model.hpp"
#include "fedadmm/rng.hpp"

namespace fedadmm {

inline const Dataset& no_data() {
  static const Dataset empty{};
  return empty;
}

/// f_i: a model restricted to one client's shard.
struct LocalObjective {
  const Objective* model = nullptr;
  const Dataset* data = nullptr;
  IndexSpan shard;

  const Dataset& dataset() const { return data ? *data : no_data(); }
  std::size_t dim() const { return param_dim(*model); }

  double loss(const ParamVector& w) const { return eval_loss(*model, w, dataset(), shard); }
  ParamVector grad(const ParamVector& w) const { return eval_grad(*model, w, dataset(), shard); }
  ParamVector batch_grad(const ParamVector& w, IndexSpan batch) const {
    return eval_grad(*model, w, dataset(), batch);
  }
  // Inside a local solve a non-finite gradient means the iterate blew up
  // (datasets are checked for finite features on construction).
  ParamVector solver_grad(const ParamVector& w, IndexSpan batch, int client, int epoch) const {
    try {
      return batch_grad(w, batch);
    } catch (const NumericError&) {
      throw DivergenceError(client, epoch);
    }
  }
};

struct ClientState {
  int id = 0;
  ParamVector w;        // local primal
  ParamVector y;        // local dual
  ParamVector control;  // SCAFFOLD client control variate; empty for other strategies
  int epochs_max = 1;
  double lr = 0.1;
  std::size_t batch_size = 0;  // 0: full batch
};

struct ServerState {
  ParamVector theta;
  double eta = 1.0;
  double rho = 0.01;
  int round = 0;
  ParamVector control;  // SCAFFOLD server control variate
};

inline ClientState make_client(int id, const ParamVector& theta0, int epochs_max, double lr,
                               std::size_t batch_size) {
  if (epochs_max < 1) throw ConfigError("client epochs must be >= 1");
  if (!(lr > 0)) throw ConfigError("client learning rate must be > 0");
  ClientState c;
  c.id = id;
  c.w = theta0;
  c.y = ParamVector::Zero(theta0.size());
  c.epochs_max = epochs_max;
  c.lr = lr;
  c.batch_size = batch_size;
  return c;
}

namespace detail {
inline void same_dim(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) throw ConfigError(std::string("dimension mismatch: ") + what);
}
}  // namespace detail

/// L_i(w, y, theta) = f_i(w) + y^T (w - theta) + rho/2 ||w - theta||^2 on the full shard.
inline double aug_lagrangian(const LocalObjective& f, const ParamVector& w, const ParamVector& y,
                             const ParamVector& theta, double rho) {
  detail::same_dim(w, y, "w vs y");
  detail::same_dim(w, theta, "w vs theta");
  const ParamVector r = w - theta;
  return f.loss(w) + y.dot(r) + 0.5 * rho * r.squaredNorm();
}

/// grad f_i(w, batch) + y + rho (w - theta).
inline ParamVector aug_lagrangian_grad_w(const LocalObjective& f, const ParamVector& w, const ParamVector& y,
                                         const ParamVector& theta, double rho, IndexSpan batch) {
  detail::same_dim(w, y, "w vs y");
  detail::same_dim(w, theta, "w vs theta");
  ParamVector g = f.batch_grad(w, batch);
  g += y;
  g += rho * (w - theta);
  return g;
}

/// ||grad_w L_i(w, y, theta)||^2 over the full shard. Callers compare against eps_i.
inline double inexactness_residual(const LocalObjective& f, const ParamVector& w, const ParamVector& y,
                                   const ParamVector& theta, double rho) {
  return aug_lagrangian_grad_w(f, w, y, theta, rho, f.shard).squaredNorm();
}

/// Shuffled mini-batches of a shard; a single full batch when batch_size is 0
/// or at least the shard size. Data-free objectives get one empty batch.
inline std::vector<Batch> make_batches(IndexSpan shard, std::size_t batch_size, Rng& rng) {
  if (shard.empty()) return {Batch{}};
  Batch order(shard.begin(), shard.end());
  std::shuffle(order.begin(), order.end(), rng);
  if (batch_size == 0 || batch_size >= order.size()) return {std::move(order)};
  std::vector<Batch> out;
  out.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto stop = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

/// Runs `epochs` passes of mini-batch SGD on f_i(w) + dual^T (w - anchor) +
/// rho/2 ||w - anchor||^2 starting from `w`. Returns the number of steps taken.
/// Batches are reshuffled every epoch from `rng`.
inline int prox_sgd(const LocalObjective& f, ParamVector& w, const ParamVector& dual, const ParamVector& anchor,
                    double rho, double lr, int epochs, std::size_t batch_size, Rng& rng, int client_id) {
  int steps = 0;
  ParamVector g(w.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& batch : make_batches(f.shard, batch_size, rng)) {
      g = f.solver_grad(w, batch, client_id, epoch + 1);
      w -= lr * (g + dual + rho * (w - anchor));
      ++steps;
    }
    if (!w.allFinite()) throw DivergenceError(client_id, epoch + 1);
  }
  return steps;
}

enum class DualMode {
  Active,
  // Dual pinned at zero, no dual update, restart from theta: the FedProx local solver.
  Frozen,
};

struct LocalSolve {
  ClientState state;
  int steps = 0;
};

/// Warm-started inexact local solve followed by the dual ascent step
/// y <- y + rho (w_new - theta).
inline LocalSolve client_update_sgd(const ClientState& state, const LocalObjective& f, const ParamVector& theta,
                                    double rho, int epochs, Rng& rng, DualMode mode = DualMode::Active) {
  if (epochs < 1 || epochs > state.epochs_max)
    throw ConfigError("epochs " + std::to_string(epochs) + " outside [1, " + std::to_string(state.epochs_max) +
                      "] for client " + std::to_string(state.id));
  detail::same_dim(state.w, theta, "client w vs theta");
  LocalSolve out{state, 0};
  ClientState& next = out.state;
  if (mode == DualMode::Frozen) {
    next.w = theta;
    next.y.setZero(theta.size());
  }
  out.steps = prox_sgd(f, next.w, next.y, theta, rho, state.lr, epochs, state.batch_size, rng, state.id);
  if (mode == DualMode::Active) next.y += rho * (next.w - theta);
  return out;
}

/// Exact minimizer of the quadratic augmented Lagrangian:
///   w' = (A + (l2 + rho) I)^{-1} (A c + rho theta - y),  y' = y + rho (w' - theta).
inline ClientState client_update_exact_quadratic(const ClientState& state, const LocalObjective& f,
                                                 const ParamVector& theta, double rho) {
  const auto* q = std::get_if<Quadratic>(&f.model->model);
  if (!q) throw ConfigError("exact local solve requires a quadratic objective");
  if (!(rho > 0)) throw ConfigError("exact local solve requires rho > 0");
  detail::same_dim(state.w, theta, "client w vs theta");
  Eigen::MatrixXd system = q->curvature;
  system.diagonal().array() += f.model->l2 + rho;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("A + rho I is singular", static_cast<std::size_t>(state.id));
  ClientState next = state;
  const ParamVector rhs = q->curvature * q->center + rho * theta - state.y;
  next.w = ldlt.solve(rhs);
  next.y = state.y + rho * (next.w - theta);
  return next;
}

/// u_i = w_i + y_i / rho.
inline ParamVector augmented_model(const ClientState& s, double rho) { return s.w + s.y / rho; }

/// Delta = u_after - u_before.
inline ParamVector update_message(const ClientState& before, const ClientState& after, double rho) {
  if (!(rho > 0)) throw ConfigError("update message requires rho > 0");
  if (before.id != after.id) throw ConfigError("update message across different clients");
  detail::same_dim(before.w, after.w, "before vs after");
  return (after.w + after.y / rho) - (before.w + before.y / rho);
}

/// theta' = theta + (eta / |S|) sum Delta_i, deltas in ascending client id.
/// An empty active set leaves theta unchanged; the round still advances.
inline ServerState server_aggregate(const ServerState& server, std::span<const ParamVector> deltas) {
  ServerState next = server;
  next.round = server.round + 1;
  if (deltas.empty()) return next;
  ParamVector sum = ParamVector::Zero(server.theta.size());
  for (const auto& delta : deltas) {
    detail::same_dim(delta, server.theta, "delta vs theta");
    sum += delta;
  }
  const double scale = server.eta / static_cast<double>(deltas.size());
  next.theta = server.theta + scale * sum;
  return next;
}

/// grad_theta of the aggregate Lagrangian: rho (m theta - sum_i u_i).
inline ParamVector server_gradient(std::span<const ClientState> clients, const ParamVector& theta, double rho) {
  ParamVector sum_u = ParamVector::Zero(theta.size());
  for (const auto& c : clients) sum_u += augmented_model(c, rho);
  return rho * (static_cast<double>(clients.size()) * theta - sum_u);
}

/// Sum_i L_i(w_i, y_i, theta).
inline double aggregate_lagrangian(std::span<const ClientState> clients, std::span<const LocalObjective> fs,
                                   const ParamVector& theta, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < clients.size(); ++i)
    total += aug_lagrangian(fs[i], clients[i].w, clients[i].y, theta, rho);
  return total;
}

/// Optimality gap V = ||grad_theta L||^2 + sum_i (||grad_{w_i} L_i||^2 + ||w_i - theta||^2).
/// Zero exactly at stationary points of the consensus problem.
inline double optimality_gap(std::span<const ClientState> clients, std::span<const LocalObjective> fs,
                             const ParamVector& theta, double rho) {
  if (clients.size() != fs.size()) throw ConfigError("optimality gap: one objective per client required");
  double v = server_gradient(clients, theta, rho).squaredNorm();
  for (std::size_t i = 0; i < clients.size(); ++i) {
    v += inexactness_residual(fs[i], clients[i].w, clients[i].y, theta, rho);
    v += (clients[i].w - theta).squaredNorm();
  }
  return v;
}

/// ||grad f_i(w_i) + y_i||^2: the residual the most recent local solve left
/// behind, re-expressed through the post-update dual.
inline double local_error(const LocalObjective& f, const ClientState& s) {
  return (f.grad(s.w) + s.y).squaredNorm();
}

// ---------------------------------------------------------------------------
// Convergence-rate bound
// ---------------------------------------------------------------------------

struct Theorem1Constants {
  double c1 = 0, c2 = 0, c3 = 0;
  double eps_max = 0;
  double p_min = 0;
  double L = 0;
  double rho = 0;
};

inline double rho_threshold(double L) { return (1.0 + std::sqrt(5.0)) * L; }

/// Throws InvalidHyperparameter unless rho > (1 + sqrt 5) L and p_min > 0.
inline Theorem1Constants theorem1_constants(double L, double rho, double p_min, double eps_max = 0.0) {
  if (!(L > 0)) throw InvalidHyperparameter("Lipschitz constant L must be > 0");
  if (!(p_min > 0) || p_min > 1) throw InvalidHyperparameter("participation probability p_min must lie in (0, 1]");
  if (eps_max < 0) throw InvalidHyperparameter("eps_max must be >= 0");
  if (!(rho > rho_threshold(L)))
    throw InvalidHyperparameter("rho = " + std::to_string(rho) + " must exceed (1+sqrt(5))L = " +
                                std::to_string(rho_threshold(L)));
  Theorem1Constants k;
  k.L = L;
  k.rho = rho;
  k.p_min = p_min;
  k.eps_max = eps_max;
  k.c1 = p_min * ((rho - 2 * L) / 2 - 2 * L * L / rho);
  k.c2 = 3 * (L * L + rho * rho) + 2 * (1 + 2 * L * L / (rho * rho));
  k.c3 = 3 + 16 / (rho * rho) + (k.c2 / k.c1) * (rho + 16 * L) / (2 * L * rho);
  return k;
}

/// Upper bound on (1/mT) sum_{t<T} E[V^t]:
///   (1/mT)(c2/c1)(L0 - f* + m eps_max / 2L) + c3 eps_max.
inline double theorem1_bound(const Theorem1Constants& k, double L0, double f_star, int m, int T) {
  if (!(k.c1 > 0)) throw InvalidHyperparameter("c1 must be positive; rho must exceed (1+sqrt(5))L");
  if (m < 1 || T < 1) throw ConfigError("theorem bound needs m >= 1 and T >= 1");
  const double mT = static_cast<double>(m) * static_cast<double>(T);
  return (k.c2 / k.c1) * (L0 - f_star + static_cast<double>(m) * k.eps_max / (2 * k.L)) / mT + k.c3 * k.eps_max;
}

// ---------------------------------------------------------------------------
// Runtime checks of the per-round inequalities
// ---------------------------------------------------------------------------

inline bool leq_with_slack(double lhs, double rhs) {
  return lhs <= rhs + 1e-9 * std::max(std::abs(lhs), std::abs(rhs)) + 1e-14;
}

/// ||y' - y||^2 <= 8 eps + 2 L^2 ||w' - w||^2 for an active client, where eps
/// bounds both the pre- and post-round local errors.
inline bool dual_step_bound_holds(const ClientState& before, const ClientState& after, double eps, double L) {
  const double lhs = (after.y - before.y).squaredNorm();
  const double rhs = 8 * eps + 2 * L * L * (after.w - before.w).squaredNorm();
  return leq_with_slack(lhs, rhs);
}

/// L^{t+1} >= f* - (1/2L) sum_i eps_i (requires rho >= 2L).
inline bool lagrangian_lower_bound_holds(double lagrangian, double f_star, double sum_eps, double L) {
  return leq_with_slack(f_star - sum_eps / (2 * L), lagrangian);
}

// ---------------------------------------------------------------------------
// Closed-form consensus solution for quadratic ensembles
// ---------------------------------------------------------------------------

struct ConsensusSolution {
  ParamVector theta;  // argmin sum_i f_i
  double f_star = 0;  // sum_i f_i(theta)
};

inline ConsensusSolution quadratic_consensus(std::span<const Objective> objectives) {
  if (objectives.empty()) throw ConfigError("consensus solution needs at least one objective");
  const auto d = static_cast<Eigen::Index>(param_dim(objectives.front()));
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
  ParamVector b = ParamVector::Zero(d);
  for (const auto& obj : objectives) {
    const auto* q = std::get_if<Quadratic>(&obj.model);
    if (!q) throw ConfigError("consensus solution requires quadratic objectives");
    H += q->curvature;
    H.diagonal().array() += obj.l2;
    b += q->curvature * q->center;
  }
  ConsensusSolution sol;
  sol.theta = H.ldlt().solve(b);
  for (const auto& obj : objectives) sol.f_star += eval_loss(obj, sol.theta, no_data(), {});
  return sol;
}

}  // namespace fedadmm
