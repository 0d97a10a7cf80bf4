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

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "fedadmm/core.hpp"
#include "oracles.hpp"

namespace fedadmm {
namespace {

ParamVector scalar(double x) { return ParamVector::Constant(1, x); }

struct ScalarQuadratic {
  Objective obj;
  LocalObjective f;
  explicit ScalarQuadratic(double a = 1, double c = 3)
      : obj(make_quadratic(Eigen::MatrixXd::Constant(1, 1, a), ParamVector::Constant(1, c))), f{&obj, nullptr, {}} {}
};

ClientState client_at(const ParamVector& w, const ParamVector& y, double lr = 0.1, int epochs = 1) {
  ClientState s = make_client(0, w, epochs, lr, 0);
  s.y = y;
  return s;
}

TEST(AugLagrangian, HandArithmetic) {
  ScalarQuadratic q;
  EXPECT_DOUBLE_EQ(aug_lagrangian(q.f, scalar(1), scalar(0.5), scalar(0), 1.0), 3.0);
}

TEST(AugLagrangian, AtConsensusEqualsLoss) {
  ScalarQuadratic q;
  EXPECT_DOUBLE_EQ(aug_lagrangian(q.f, scalar(2), scalar(-7), scalar(2), 5.0), q.f.loss(scalar(2)));
  EXPECT_DOUBLE_EQ(aug_lagrangian(q.f, scalar(1), scalar(0), scalar(-4), 0.0), q.f.loss(scalar(1)));
}

TEST(AugLagrangian, GradientHandArithmetic) {
  ScalarQuadratic q;
  EXPECT_DOUBLE_EQ(aug_lagrangian_grad_w(q.f, scalar(1.5), scalar(0.5), scalar(0), 1.0, {})[0], 0.5);
  EXPECT_DOUBLE_EQ(aug_lagrangian_grad_w(q.f, scalar(1.5), scalar(0), scalar(1.5), 1.0, {})[0], -1.5);
}

TEST(AugLagrangian, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(3, 3);
  const auto obj = make_quadratic(B * B.transpose(), ParamVector::Random(3));
  const LocalObjective f{&obj, nullptr, {}};
  for (int t = 0; t < 20; ++t) {
    ParamVector w(3), y(3), theta(3);
    for (int j = 0; j < 3; ++j) w[j] = normal(rng), y[j] = normal(rng), theta[j] = normal(rng);
    const auto ref = oracle::fd_gradient([&](const Eigen::VectorXd& x) { return aug_lagrangian(f, x, y, theta, 0.7); }, w);
    EXPECT_LE(oracle::relative_error(aug_lagrangian_grad_w(f, w, y, theta, 0.7, {}), ref), 1e-6);
  }
}

TEST(ClientUpdate, SingleSgdStep) {
  ScalarQuadratic q;
  Rng rng(1);
  const auto out = client_update_sgd(client_at(scalar(0), scalar(0)), q.f, scalar(0), 1.0, 1, rng);
  EXPECT_DOUBLE_EQ(out.state.w[0], 0.3);
  EXPECT_DOUBLE_EQ(out.state.y[0], 0.3);
  EXPECT_EQ(out.steps, 1);
}

TEST(ClientUpdate, EpochsOutsideRangeRejected) {
  ScalarQuadratic q;
  Rng rng(1);
  const auto c = client_at(scalar(0), scalar(0), 0.1, 3);
  EXPECT_THROW(client_update_sgd(c, q.f, scalar(0), 1.0, 0, rng), ConfigError);
  EXPECT_THROW(client_update_sgd(c, q.f, scalar(0), 1.0, 4, rng), ConfigError);
}

TEST(ClientUpdate, DivergenceCarriesClientAndEpoch) {
  ScalarQuadratic q;
  Rng rng(1);
  auto c = client_at(scalar(0), scalar(0), 1e100, 5);
  c.id = 7;
  try {
    client_update_sgd(c, q.f, scalar(0), 1.0, 5, rng);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.client(), 7);
    EXPECT_GE(e.epoch(), 1);
  }
}

TEST(ClientUpdate, StronglyConvexSubproblemReachesAnyResidual) {
  Eigen::MatrixXd A(2, 2);
  A << 2, 0.5, 0.5, 1;
  const auto obj = make_quadratic(A, ParamVector::Constant(2, 1.0));
  const LocalObjective f{&obj, nullptr, {}};
  const ParamVector theta = ParamVector::Constant(2, -1.0);
  const double rho = 5.0;  // > L
  for (double eps : {1e-2, 1e-8, 1e-16}) {
    auto c = client_at(ParamVector::Zero(2), ParamVector::Constant(2, 0.4), 0.1, 1);
    // one epoch per call, dual held by restoring it; only the primal iterates
    const ParamVector y0 = c.y;
    int rounds = 0;
    while (inexactness_residual(f, c.w, y0, theta, rho) > eps && rounds < 10000) {
      Rng rng(static_cast<std::uint64_t>(rounds));
      c = client_update_sgd(c, f, theta, rho, 1, rng).state;
      c.y = y0;
      ++rounds;
    }
    EXPECT_LE(inexactness_residual(f, c.w, y0, theta, rho), eps);
  }
}

TEST(ClientUpdate, FrozenDualMatchesProxSolverFromTheta) {
  std::mt19937_64 gen(9);
  Dataset data;
  data.classes = 3;
  data.features = FeatureMatrix::Random(30, 4);
  for (int i = 0; i < 30; ++i) data.labels.push_back(i % 3);
  const auto obj = make_logistic(4, 3);
  const Batch shard = all_indices(data);
  const LocalObjective f{&obj, &data, shard};
  const ParamVector theta = ParamVector::Random(12);
  auto c = make_client(0, ParamVector::Random(12), 4, 0.05, 7);
  c.y = ParamVector::Random(12);

  Rng a(55), b(55);
  const auto frozen = client_update_sgd(c, f, theta, 0.3, 4, a, DualMode::Frozen);
  ParamVector w = theta;
  prox_sgd(f, w, ParamVector::Zero(12), theta, 0.3, 0.05, 4, 7, b, 0);
  EXPECT_TRUE(frozen.state.w == w);
  EXPECT_TRUE(frozen.state.y.isZero(0));
}

TEST(ExactQuadratic, ClosedForm) {
  ScalarQuadratic q;
  const auto next = client_update_exact_quadratic(client_at(scalar(0), scalar(0)), q.f, scalar(0), 1.0);
  EXPECT_NEAR(next.w[0], 1.5, 1e-15);
  EXPECT_NEAR(next.y[0], 1.5, 1e-15);
  // residual of the subproblem that was solved, i.e. against the incoming dual
  EXPECT_LE(inexactness_residual(q.f, next.w, scalar(0), scalar(0), 1.0), 1e-20);
  EXPECT_LE(local_error(q.f, next), 1e-20);
}

TEST(ExactQuadratic, AlreadyOptimalStaysPut) {
  ScalarQuadratic q;
  const auto next = client_update_exact_quadratic(client_at(scalar(3), scalar(0)), q.f, scalar(3), 1.0);
  EXPECT_NEAR(next.w[0], 3.0, 1e-15);
  EXPECT_NEAR(next.y[0], 0.0, 1e-15);
}

TEST(ExactQuadratic, AugmentedGradientVanishesInHigherDimension) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(4, 4);
  const auto obj = make_quadratic(B * B.transpose(), ParamVector::Random(4), 0.1);
  const LocalObjective f{&obj, nullptr, {}};
  const ParamVector theta = ParamVector::Random(4);
  const ParamVector y = ParamVector::Random(4);
  const auto next = client_update_exact_quadratic(client_at(ParamVector::Zero(4), y), f, theta, 2.0);
  // Residual is taken against the pre-update dual the subproblem was solved with.
  EXPECT_LE(aug_lagrangian_grad_w(f, next.w, y, theta, 2.0, {}).norm(), 1e-12);
}

TEST(Residual, CancellationAndThreshold) {
  ScalarQuadratic q;
  const ParamVector theta = scalar(1);
  EXPECT_DOUBLE_EQ(inexactness_residual(q.f, theta, -q.f.grad(theta), theta, 3.0), 0.0);
  // w=1.5, y=1, theta=1, rho=0: grad = -1.5 + 1 = -0.5, squared 0.25
  const double r = inexactness_residual(q.f, scalar(1.5), scalar(1.0), scalar(1.5), 0.0);
  EXPECT_DOUBLE_EQ(r, 0.25);
  EXPECT_TRUE(r <= 0.3);
  EXPECT_FALSE(r <= 0.2);
}

TEST(UpdateMessage, Examples) {
  const auto before = client_at(scalar(0), scalar(0));
  EXPECT_TRUE(update_message(before, before, 1.0).isZero(0));
  EXPECT_DOUBLE_EQ(update_message(before, client_at(scalar(0.3), scalar(0.3)), 1.0)[0], 0.6);
  EXPECT_DOUBLE_EQ(update_message(before, client_at(scalar(1.5), scalar(1.5)), 1.0)[0], 3.0);
  EXPECT_THROW(update_message(before, before, 0.0), ConfigError);
}

TEST(ServerAggregate, MeanOfDeltas) {
  ServerState s;
  s.theta = ParamVector::Zero(2);
  s.eta = 1.0;
  std::vector<ParamVector> deltas = {ParamVector::Zero(2), ParamVector::Zero(2)};
  deltas[0] << 1, 0;
  deltas[1] << 0, 2;
  const auto next = server_aggregate(s, deltas);
  EXPECT_DOUBLE_EQ(next.theta[0], 0.5);
  EXPECT_DOUBLE_EQ(next.theta[1], 1.0);
  EXPECT_EQ(next.round, 1);
}

TEST(ServerAggregate, ZeroDeltasAndEmptySetAreFixedPoints) {
  ServerState s;
  s.theta = ParamVector::LinSpaced(3, 1, 3);
  std::vector<ParamVector> zeros(4, ParamVector::Zero(3));
  EXPECT_TRUE(server_aggregate(s, zeros).theta == s.theta);
  const auto skipped = server_aggregate(s, {});
  EXPECT_TRUE(skipped.theta == s.theta);
  EXPECT_EQ(skipped.round, 1);
}

// Under eta = |S|/m with zero duals and w = theta at start, theta tracks the
// mean augmented model of all m clients.
TEST(ServerAggregate, TracksMeanAugmentedModel) {
  const int m = 12, d = 3;
  const double rho = 2.0;
  std::mt19937_64 gen(21);
  std::vector<Objective> objs;
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Random(d, d);
    objs.push_back(make_quadratic(B * B.transpose() + Eigen::MatrixXd::Identity(d, d), ParamVector::Random(d)));
  }
  ServerState server;
  server.theta = ParamVector::Random(d);
  server.rho = rho;
  std::vector<ClientState> clients;
  for (int i = 0; i < m; ++i) clients.push_back(make_client(i, server.theta, 3, 0.05, 0));
  std::vector<int> ids(m);
  std::iota(ids.begin(), ids.end(), 0);
  for (int round = 0; round < 50; ++round) {
    std::shuffle(ids.begin(), ids.end(), gen);
    const int active = 1 + static_cast<int>(gen() % m);
    std::vector<ParamVector> deltas;
    for (int k = 0; k < active; ++k) {
      auto& c = clients[static_cast<std::size_t>(ids[static_cast<std::size_t>(k)])];
      const LocalObjective f{&objs[static_cast<std::size_t>(c.id)], nullptr, {}};
      Rng rng(gen());
      const auto next = client_update_sgd(c, f, server.theta, rho, 3, rng).state;
      deltas.push_back(update_message(c, next, rho));
      c = next;
    }
    server.eta = static_cast<double>(active) / m;
    server = server_aggregate(server, deltas);
    ParamVector mean_u = ParamVector::Zero(d);
    for (const auto& c : clients) mean_u += augmented_model(c, rho);
    mean_u /= m;
    ASSERT_LE((server.theta - mean_u).norm(), 1e-9) << "round " << round;
  }
}

TEST(OptimalityGap, ZeroAtKktPoint) {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> c;
  std::vector<Objective> objs;
  for (int i = 0; i < 4; ++i) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Random(2, 2);
    A.push_back(B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(2, 2));
    c.push_back(Eigen::VectorXd::Random(2));
    objs.push_back(make_quadratic(A.back(), c.back()));
  }
  const auto theta = oracle::quadratic_sum_minimizer_gd(A, c);
  std::vector<ClientState> states;
  std::vector<LocalObjective> fs;
  for (int i = 0; i < 4; ++i) {
    fs.push_back({&objs[static_cast<std::size_t>(i)], nullptr, {}});
    auto s = make_client(i, theta, 1, 0.1, 0);
    s.y = -fs.back().grad(theta);
    states.push_back(s);
  }
  EXPECT_LE(optimality_gap(states, fs, theta, 1.5), 1e-16);
}

// With one client stationarity forces y = 0, so theta must be the minimizer;
// elsewhere the server term rho(theta - u) = -y is what keeps V positive.
TEST(OptimalityGap, SingleClientStationary) {
  ScalarQuadratic q;
  std::vector<LocalObjective> fs = {q.f};
  const ParamVector theta = scalar(3);
  std::vector<ClientState> states = {client_at(theta, -q.f.grad(theta))};
  EXPECT_DOUBLE_EQ(optimality_gap(states, fs, theta, 1.0), 0.0);
  const ParamVector off = scalar(-2);
  states = {client_at(off, -q.f.grad(off))};
  EXPECT_DOUBLE_EQ(optimality_gap(states, fs, off, 1.0), 25.0);
}

TEST(OptimalityGap, PositiveAwayFromStationarity) {
  ScalarQuadratic q;
  std::vector<ClientState> states = {client_at(scalar(0), scalar(0))};
  std::vector<LocalObjective> fs = {q.f};
  // ||rho(theta - u)||^2 = 0, residual = 9, ||w - theta||^2 = 0
  EXPECT_DOUBLE_EQ(optimality_gap(states, fs, scalar(0), 1.0), 9.0);
}

TEST(OptimalityGap, ConsensusSolverAgreesWithGradientDescentOracle) {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> c;
  std::vector<Objective> objs;
  for (int i = 0; i < 6; ++i) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Random(3, 3);
    A.push_back(B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3));
    c.push_back(Eigen::VectorXd::Random(3) * 4);
    objs.push_back(make_quadratic(A.back(), c.back()));
  }
  const auto sol = quadratic_consensus(objs);
  EXPECT_LE((sol.theta - oracle::quadratic_sum_minimizer_gd(A, c)).norm(), 1e-9);
}

TEST(Theorem1, Constants) {
  const auto k = theorem1_constants(1.0, 4.0, 0.1);
  EXPECT_NEAR(k.c1, 0.05, 1e-12);
  EXPECT_NEAR(k.c2, 53.25, 1e-12);
  EXPECT_NEAR(k.c3, 2666.5, 1e-9);
}

TEST(Theorem1, ThresholdViolationNamesThreshold) {
  try {
    theorem1_constants(1.0, 3.0, 0.1);
    FAIL() << "expected InvalidHyperparameter";
  } catch (const InvalidHyperparameter& e) {
    EXPECT_NE(std::string(e.what()).find("3.236"), std::string::npos) << e.what();
  }
  EXPECT_THROW(theorem1_constants(1.0, 4.0, 0.0), InvalidHyperparameter);
}

TEST(Theorem1, BoundDecreasesToZeroWithoutInexactness) {
  const auto k = theorem1_constants(1.0, 4.0, 0.1);
  double prev = theorem1_bound(k, 10.0, 1.0, 20, 1);
  for (int T = 2; T <= 1000; ++T) {
    const double b = theorem1_bound(k, 10.0, 1.0, 20, T);
    ASSERT_LT(b, prev);
    prev = b;
  }
  EXPECT_LT(theorem1_bound(k, 10.0, 1.0, 20, 100000000), 1e-3);
}

TEST(Theorem1, InexactnessFloor) {
  const auto k = theorem1_constants(1.0, 4.0, 0.1, 0.01);
  EXPECT_GT(theorem1_bound(k, 10.0, 1.0, 20, 100000000), k.c3 * 0.01);
}

TEST(Lemmas, DualStepBoundAndLowerBound) {
  auto before = client_at(scalar(0), scalar(0));
  auto after = client_at(scalar(1), scalar(3));
  // 9 <= 8 eps + 2 L^2 * 1
  EXPECT_TRUE(dual_step_bound_holds(before, after, 7.0 / 8.0, 1.0));
  EXPECT_FALSE(dual_step_bound_holds(before, after, 0.8, 1.0));
  EXPECT_TRUE(lagrangian_lower_bound_holds(0.0, 1.0, 2.0, 1.0));
  EXPECT_FALSE(lagrangian_lower_bound_holds(-0.5, 1.0, 2.0, 1.0));
}

}  // namespace
}  // namespace fedadmm
