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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fedadmm/error.hpp"

namespace fedadmm {

/// Dense model / dual / message vector. All arithmetic is in doubles.
using ParamVector = Eigen::VectorXd;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sample indices into a Dataset.
using Batch = std::vector<std::size_t>;
using IndexSpan = std::span<const std::size_t>;

struct Dataset {
  FeatureMatrix features;  // n x p
  std::vector<int> labels;
  int classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

inline void validate(const Dataset& data) {
  if (data.size() == 0) throw ConfigError("dataset '" + data.name + "' is empty");
  if (static_cast<std::size_t>(data.features.rows()) != data.size())
    throw ConfigError("dataset '" + data.name + "': feature rows do not match label count");
  if (data.classes < 1) throw ConfigError("dataset '" + data.name + "': class count must be positive");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= data.classes)
      throw ConfigError("dataset '" + data.name + "': label out of range at sample " + std::to_string(i));
    if (!data.features.row(static_cast<Eigen::Index>(i)).allFinite())
      throw NumericError("dataset '" + data.name + "': non-finite feature row", i);
  }
}

/// Batch must be non-empty, in range and free of duplicates.
inline void validate_batch(const Dataset& data, IndexSpan batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  std::vector<std::size_t> sorted(batch.begin(), batch.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() >= data.size())
    throw ConfigError("batch index " + std::to_string(sorted.back()) + " out of range for dataset of size " +
                      std::to_string(data.size()));
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("batch contains duplicate indices");
}

inline Dataset subset(const Dataset& data, IndexSpan indices, std::string name = {}) {
  Dataset out;
  out.classes = data.classes;
  out.name = name.empty() ? data.name : std::move(name);
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(data.labels[indices[r]]);
  }
  return out;
}

inline Batch all_indices(const Dataset& data) {
  Batch idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// ---------------------------------------------------------------------------
// Objective kinds
// ---------------------------------------------------------------------------

/// f(w) = 1/2 (w-c)^T A (w-c). Data-free; batches are ignored.
struct Quadratic {
  Eigen::MatrixXd curvature;
  ParamVector center;
};

/// Multinomial logistic regression without intercept. Weights are a
/// classes x features row-major matrix flattened into the parameter vector.
struct Logistic {
  int features = 0;
  int classes = 0;
};

/// One hidden tanh layer followed by a softmax output:
///   [W1 (hidden x features) | b1 (hidden) | W2 (classes x hidden) | b2 (classes)].
/// No certified smoothness constant exists; `declared_lipschitz` is used
/// wherever one is needed and is reported as heuristic.
struct SmallNet {
  int features = 0;
  int hidden = 0;
  int classes = 0;
  double declared_lipschitz = 10.0;
};

struct Objective {
  std::variant<Quadratic, Logistic, SmallNet> model;
  double l2 = 0.0;  // adds l2/2 ||w||^2

  bool is_quadratic() const noexcept { return std::holds_alternative<Quadratic>(model); }
  bool uses_data() const noexcept { return !is_quadratic(); }
};

inline Objective make_quadratic(Eigen::MatrixXd curvature, ParamVector center, double l2 = 0.0) {
  if (curvature.rows() != curvature.cols() || curvature.rows() != center.size())
    throw ConfigError("quadratic: curvature must be d x d with d = dim(center)");
  const double scale = std::max(1.0, curvature.cwiseAbs().maxCoeff());
  if ((curvature - curvature.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("quadratic: curvature matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(curvature, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
    throw ConfigError("quadratic: curvature matrix is not positive semidefinite");
  if (l2 < 0) throw ConfigError("regularization coefficient must be >= 0");
  return Objective{Quadratic{std::move(curvature), std::move(center)}, l2};
}

inline Objective make_logistic(int features, int classes, double l2 = 0.0) {
  if (features < 1 || classes < 2) throw ConfigError("logistic: need features >= 1 and classes >= 2");
  if (l2 < 0) throw ConfigError("regularization coefficient must be >= 0");
  return Objective{Logistic{features, classes}, l2};
}

inline Objective make_smallnet(int features, int hidden, int classes, double declared_lipschitz = 10.0,
                               double l2 = 0.0) {
  if (features < 1 || hidden < 1 || classes < 2)
    throw ConfigError("smallnet: need features >= 1, hidden >= 1 and classes >= 2");
  if (!(declared_lipschitz > 0)) throw ConfigError("smallnet: declared Lipschitz constant must be positive");
  if (l2 < 0) throw ConfigError("regularization coefficient must be >= 0");
  return Objective{SmallNet{features, hidden, classes, declared_lipschitz}, l2};
}

inline std::size_t param_dim(const Objective& obj) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Quadratic>) {
          return static_cast<std::size_t>(m.center.size());
        } else if constexpr (std::is_same_v<M, Logistic>) {
          return static_cast<std::size_t>(m.features) * m.classes;
        } else {
          return static_cast<std::size_t>(m.hidden) * (m.features + 1) +
                 static_cast<std::size_t>(m.classes) * (m.hidden + 1);
        }
      },
      obj.model);
}

namespace detail {

using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutRowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline void check_dim(const Objective& obj, const ParamVector& w) {
  const auto d = param_dim(obj);
  if (static_cast<std::size_t>(w.size()) != d)
    throw ConfigError("parameter dimension " + std::to_string(w.size()) + " does not match objective dimension " +
                      std::to_string(d));
}

inline void check_data(const Objective& obj, const Dataset& data, IndexSpan batch, int features, int classes) {
  (void)obj;
  if (batch.empty()) throw ConfigError("empty batch");
  if (static_cast<int>(data.dim()) != features)
    throw ConfigError("dataset feature dimension " + std::to_string(data.dim()) + " does not match model (" +
                      std::to_string(features) + ")");
  if (data.classes > classes)
    throw ConfigError("dataset has more classes than the model outputs");
  for (auto i : batch)
    if (i >= data.size()) throw ConfigError("batch index " + std::to_string(i) + " out of range");
}

// Cross-entropy of softmax(z) at `label`; overwrites z with softmax(z) - onehot when `want_grad`.
inline double softmax_xent(Eigen::Ref<Eigen::VectorXd> z, int label, bool want_grad) {
  const double zmax = z.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) sum += std::exp(z[k] - zmax);
  const double lse = zmax + std::log(sum);
  const double loss = lse - z[label];
  if (want_grad) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = std::exp(z[k] - lse);
    z[label] -= 1.0;
  }
  return loss;
}

// Mean loss over the batch (without the l2 term); adds the mean gradient into `grad` when non-null.
inline double logistic_eval(const Logistic& m, const ParamVector& w, const Dataset& data, IndexSpan batch,
                            ParamVector* grad) {
  RowMap W(w.data(), m.classes, m.features);
  Eigen::VectorXd z(m.classes);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::optional<MutRowMap> G;
  if (grad) G.emplace(grad->data(), m.classes, m.features);
  for (auto i : batch) {
    const auto x = data.features.row(static_cast<Eigen::Index>(i));
    z.noalias() = W * x.transpose();
    const double li = softmax_xent(z, data.labels[i], grad != nullptr);
    if (!std::isfinite(li)) throw NumericError("non-finite logistic loss", i);
    total += li;
    if (G) G->noalias() += (scale * z) * x;
  }
  return total * scale;
}

inline double smallnet_eval(const SmallNet& m, const ParamVector& w, const Dataset& data, IndexSpan batch,
                            ParamVector* grad) {
  const Eigen::Index p = m.features, h = m.hidden, k = m.classes;
  const double* base = w.data();
  RowMap W1(base, h, p);
  Eigen::Map<const Eigen::VectorXd> b1(base + h * p, h);
  RowMap W2(base + h * p + h, k, h);
  Eigen::Map<const Eigen::VectorXd> b2(base + h * p + h + k * h, k);

  std::optional<MutRowMap> gW1, gW2;
  std::optional<Eigen::Map<Eigen::VectorXd>> gb1, gb2;
  if (grad) {
    double* g = grad->data();
    gW1.emplace(g, h, p);
    gb1.emplace(g + h * p, h);
    gW2.emplace(g + h * p + h, k, h);
    gb2.emplace(g + h * p + h + k * h, k);
  }

  Eigen::VectorXd a(h), z(k), delta(h);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto i : batch) {
    const auto x = data.features.row(static_cast<Eigen::Index>(i));
    a.noalias() = W1 * x.transpose();
    a += b1;
    a = a.array().tanh().matrix();
    z.noalias() = W2 * a;
    z += b2;
    const double li = softmax_xent(z, data.labels[i], grad != nullptr);
    if (!std::isfinite(li)) throw NumericError("non-finite network loss", i);
    total += li;
    if (grad) {
      // z now holds dloss/dlogits.
      gW2->noalias() += (scale * z) * a.transpose();
      *gb2 += scale * z;
      delta.noalias() = W2.transpose() * z;
      delta.array() *= (1.0 - a.array().square());
      gW1->noalias() += (scale * delta) * x;
      *gb1 += scale * delta;
    }
  }
  return total * scale;
}

inline double eval(const Objective& obj, const ParamVector& w, const Dataset& data, IndexSpan batch,
                   ParamVector* grad, bool check_loss = true) {
  check_dim(obj, w);
  if (grad) grad->setZero(w.size());
  double loss = std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Quadratic>) {
          const ParamVector r = w - m.center;
          const ParamVector Ar = m.curvature * r;
          if (grad) *grad = Ar;
          return 0.5 * r.dot(Ar);
        } else {
          check_data(obj, data, batch, m.features, m.classes);
          if constexpr (std::is_same_v<M, Logistic>) {
            return logistic_eval(m, w, data, batch, grad);
          } else {
            return smallnet_eval(m, w, data, batch, grad);
          }
        }
      },
      obj.model);
  if (obj.l2 > 0) {
    loss += 0.5 * obj.l2 * w.squaredNorm();
    if (grad) *grad += obj.l2 * w;
  }
  // Gradient-only callers may overflow the loss long before the gradient.
  if (check_loss && !std::isfinite(loss)) throw NumericError("non-finite loss", batch.empty() ? 0 : batch.front());
  if (grad && !grad->allFinite()) throw NumericError("non-finite gradient", batch.empty() ? 0 : batch.front());
  return loss;
}

}  // namespace detail

/// Mean per-sample loss over `batch` plus l2/2 ||w||^2. Quadratic objectives
/// ignore `data` and `batch`.
inline double eval_loss(const Objective& obj, const ParamVector& w, const Dataset& data, IndexSpan batch) {
  return detail::eval(obj, w, data, batch, nullptr);
}

inline ParamVector eval_grad(const Objective& obj, const ParamVector& w, const Dataset& data, IndexSpan batch) {
  ParamVector g;
  detail::eval(obj, w, data, batch, &g, false);
  return g;
}

inline double eval_loss_grad(const Objective& obj, const ParamVector& w, const Dataset& data, IndexSpan batch,
                             ParamVector& grad) {
  return detail::eval(obj, w, data, batch, &grad);
}

struct LipschitzBound {
  double value = 0.0;
  bool heuristic = false;  // true when no certified bound exists
};

/// Smoothness constant of the full-data (or `indices`-restricted) loss.
///   Quadratic: lambda_max(A) + l2, exact.
///   Logistic:  1/2 lambda_max(X^T X / n) + l2. The softmax cross-entropy
///              Hessian in the logits is diag(p) - p p^T, whose spectral norm
///              never exceeds 1/2.
///   SmallNet:  the declared value, flagged heuristic.
inline LipschitzBound lipschitz_bound(const Objective& obj, const Dataset& data, IndexSpan indices = {}) {
  return std::visit(
      [&](const auto& m) -> LipschitzBound {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Quadratic>) {
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.curvature, Eigen::EigenvaluesOnly);
          return {std::max(0.0, eig.eigenvalues().maxCoeff()) + obj.l2, false};
        } else if constexpr (std::is_same_v<M, Logistic>) {
          if (data.size() == 0) throw ConfigError("lipschitz_bound: dataset is empty");
          if (static_cast<int>(data.dim()) != m.features)
            throw ConfigError("lipschitz_bound: feature dimension mismatch");
          Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m.features, m.features);
          std::size_t n = 0;
          if (indices.empty()) {
            gram.selfadjointView<Eigen::Lower>().rankUpdate(data.features.transpose());
            n = data.size();
          } else {
            for (auto i : indices) {
              const auto x = data.features.row(static_cast<Eigen::Index>(i));
              gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
            }
            n = indices.size();
          }
          gram /= static_cast<double>(n);
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
          return {0.5 * std::max(0.0, eig.eigenvalues().maxCoeff()) + obj.l2, false};
        } else {
          return {m.declared_lipschitz + obj.l2, true};
        }
      },
      obj.model);
}

/// Fraction of `indices` (all samples when empty) whose argmax prediction
/// matches the label. Quadratic objectives have no notion of accuracy.
inline double accuracy(const Objective& obj, const ParamVector& w, const Dataset& data, IndexSpan indices = {}) {
  detail::check_dim(obj, w);
  Batch all;
  if (indices.empty()) {
    all = all_indices(data);
    indices = all;
  }
  return std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Quadratic>) {
          throw ConfigError("accuracy is undefined for quadratic objectives");
        } else {
          detail::check_data(obj, data, indices, m.features, m.classes);
          std::size_t correct = 0;
          Eigen::VectorXd z(m.classes);
          for (auto i : indices) {
            const auto x = data.features.row(static_cast<Eigen::Index>(i));
            if constexpr (std::is_same_v<M, Logistic>) {
              detail::RowMap W(w.data(), m.classes, m.features);
              z.noalias() = W * x.transpose();
            } else {
              const Eigen::Index p = m.features, h = m.hidden, k = m.classes;
              const double* base = w.data();
              detail::RowMap W1(base, h, p);
              Eigen::Map<const Eigen::VectorXd> b1(base + h * p, h);
              detail::RowMap W2(base + h * p + h, k, h);
              Eigen::Map<const Eigen::VectorXd> b2(base + h * p + h + k * h, k);
              Eigen::VectorXd a = (W1 * x.transpose() + b1).array().tanh().matrix();
              z.noalias() = W2 * a;
              z += b2;
            }
            Eigen::Index best = 0;
            z.maxCoeff(&best);
            if (best == data.labels[i]) ++correct;
          }
          return static_cast<double>(correct) / static_cast<double>(indices.size());
        }
      },
      obj.model);
}

}  // namespace fedadmm
