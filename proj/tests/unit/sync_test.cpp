// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mtdao/sync.hpp"

using namespace mtdao;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<WorkerState<double>> random_cluster(std::size_t m, Eigen::Index d, const OptimizerSpec& spec,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  auto draw = [&] {
    ParamVector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = n(rng);
    return v;
  };
  std::vector<WorkerState<double>> ws;
  for (std::size_t k = 0; k < m; ++k) {
    auto s = WorkerState<double>::initial(draw(), spec);
    for (auto& u : s.bank.first) u = draw();
    if (s.bank.second) *s.bank.second = draw().cwiseAbs();
    ws.push_back(std::move(s));
  }
  return ws;
}

}  // namespace

TEST(ShouldSync, PeriodicAndProbabilistic) {
  const auto periodic = SyncSchedule::periodic(32, {32});
  EXPECT_TRUE(should_sync(periodic, StateClass::params(), 64, 0.0));
  EXPECT_FALSE(should_sync(periodic, StateClass::params(), 33, 0.0));
  const auto prob = SyncSchedule::probabilistic(1.0, {0.0}, std::nullopt, 1);
  for (double coin : {0.0, 0.5, 0.999999}) {
    EXPECT_TRUE(should_sync(prob, StateClass::params(), 7, coin));
    EXPECT_FALSE(should_sync(prob, StateClass::momentum(0), 7, coin));
  }
}

TEST(ShouldSync, SharedCoinIsPureAndUniform) {
  EXPECT_EQ(shared_coin(5, StateClass::params(), 10), shared_coin(5, StateClass::params(), 10));
  EXPECT_NE(shared_coin(5, StateClass::params(), 10), shared_coin(5, StateClass::momentum(0), 10));
  double sum = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const double c = shared_coin(9, StateClass::second(), t);
    ASSERT_GE(c, 0.0);
    ASSERT_LT(c, 1.0);
    sum += c;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(AverageState, Examples) {
  std::vector<ParamVector> a{vec({1}), vec({3})};
  EXPECT_EQ(average_state<double>(a), vec({2}));
  std::vector<ParamVector> b{vec({1, 2}), vec({3, 4}), vec({5, 6})};
  EXPECT_EQ(average_state<double>(b), vec({3, 4}));
  std::vector<ParamVector> same(7, vec({0.1, -3.7, 1e-9}));
  EXPECT_EQ(average_state<double>(same), same.front());
  std::vector<ParamVector> none;
  try {
    average_state<double>(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no workers"), std::string::npos);
  }
}

TEST(AverageState, MatchesNaiveMean) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (std::size_t m : {1u, 2u, 3u, 8u, 13u}) {
    std::vector<ParamVector> ws(m, ParamVector(5));
    ParamVector naive = ParamVector::Zero(5);
    for (auto& w : ws) {
      for (Eigen::Index i = 0; i < 5; ++i) w(i) = n(rng);
      naive += w;
    }
    naive /= static_cast<double>(m);
    EXPECT_LE((average_state<double>(ws) - naive).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(OuterStep, AverageAndDegenerateNesterov) {
  auto avg = OuterOptimizer::average();
  EXPECT_EQ(avg.step(vec({0}), vec({5})), vec({5}));
  auto plain = OuterOptimizer::nesterov(1.0, 0.0);
  EXPECT_EQ(plain.step(vec({2, 3}), vec({1, -1})), vec({1, -1}));
}

TEST(OuterStep, NesterovTwoRoundTrace) {
  auto opt = OuterOptimizer::nesterov(1.0, 0.9);
  // Anchor 10, worker mean 9: pseudo-gradient 1 each round.
  const ParamVector first = opt.step(vec({10}), vec({9}));
  EXPECT_NEAR(10.0 - first(0), 1.9, 1e-15);
  const ParamVector second = opt.step(vec({10}), vec({9}));
  EXPECT_NEAR(10.0 - second(0), 2.71, 1e-14);
  EXPECT_NEAR((*opt.buffer())(0), 1.9, 1e-15);
}

TEST(OuterStep, NesterovNeedsAnchor) {
  auto opt = OuterOptimizer::nesterov();
  EXPECT_THROW(opt.step(ParamVector(), vec({1})), Error);
}

TEST(SyncRound, AllClassesEveryStep) {
  const auto spec = OptimizerSpec::adam({0.9, 0.99}, 0.999, {0.4, 0.4}, 0.1);
  auto ws = random_cluster(4, 3, spec, 1);
  const auto schedule = SyncSchedule::every_step(2, true);
  auto outer = OuterOptimizer::average();
  ParamVector anchor = ws[0].x;
  const auto out = sync_round(ws, schedule, outer, anchor, 5);
  EXPECT_TRUE(out.params_synced);
  EXPECT_EQ(out.ledger.total(), 4 * 3);
  for (const auto& w : ws) {
    EXPECT_EQ(w.x, ws[0].x);
    EXPECT_EQ(w.bank.first[0], ws[0].bank.first[0]);
    EXPECT_EQ(w.bank.first[1], ws[0].bank.first[1]);
    EXPECT_EQ(*w.bank.second, *ws[0].bank.second);
  }
  EXPECT_EQ(anchor, ws[0].x);
}

TEST(SyncRound, HalfLifePeriodsSyncOnlyParametersAt32) {
  const auto spec = OptimizerSpec::adam({0.999}, 0.9999, {0.9}, 0.1);
  auto ws = random_cluster(3, 4, spec, 2);
  const auto before = ws;
  const auto schedule = SyncSchedule::periodic(32, {693}, 6931);
  auto outer = OuterOptimizer::average();
  ParamVector anchor = ws[0].x;
  const auto out = sync_round(ws, schedule, outer, anchor, 32);
  EXPECT_EQ(out.ledger.total("x"), 4);
  EXPECT_EQ(out.ledger.total("u1"), 0);
  EXPECT_EQ(out.ledger.total("v"), 0);
  for (std::size_t m = 0; m < ws.size(); ++m) {
    EXPECT_EQ(ws[m].x, ws[0].x);
    EXPECT_EQ(ws[m].bank.first[0], before[m].bank.first[0]);
    EXPECT_EQ(*ws[m].bank.second, *before[m].bank.second);
  }
}

TEST(SyncRound, MomentaOnlyBoundary) {
  const auto spec = OptimizerSpec::sgdm({0.9}, {1.0}, 0.1);
  auto ws = random_cluster(4, 2, spec, 3);
  const auto before = ws;
  const auto schedule = SyncSchedule::probabilistic(0.0, {1.0}, std::nullopt, 4);
  auto outer = OuterOptimizer::average();
  ParamVector anchor = ws[0].x;
  for (Step t = 1; t < 50; ++t) sync_round(ws, schedule, outer, anchor, t);
  for (std::size_t m = 0; m < ws.size(); ++m) {
    EXPECT_EQ(ws[m].x, before[m].x);
    EXPECT_EQ(ws[m].bank.first[0], ws[0].bank.first[0]);
  }
}

TEST(SyncRound, IdempotentOnIdenticalWorkers) {
  const auto spec = OptimizerSpec::adopt({0.9}, 0.9999, {0.5}, 0.1);
  auto one = random_cluster(1, 6, spec, 4);
  std::vector<WorkerState<double>> ws(5, one.front());
  auto outer = OuterOptimizer::average();
  ParamVector anchor = ws[0].x;
  sync_round(ws, SyncSchedule::every_step(1, true), outer, anchor, 1);
  for (const auto& w : ws) {
    EXPECT_EQ(w.x, one[0].x);
    EXPECT_EQ(w.bank.first[0], one[0].bank.first[0]);
    EXPECT_EQ(*w.bank.second, *one[0].bank.second);
  }
}

TEST(SyncRound, ProbabilisticWithForcedCoinsReproducesPeriodic) {
  const auto spec = OptimizerSpec::adam({0.9, 0.99}, 0.999, {0.4, 0.4}, 0.1);
  const auto periodic = SyncSchedule::periodic(4, {8, 16}, 4);
  const auto prob = SyncSchedule::probabilistic(0.25, {0.125, 0.0625}, 0.25, 0);
  CoinSource forced = [&](StateClass cls, Step t) {
    return t % periodic.rule_for(cls).period == 0 ? 0.0 : 0.999;
  };
  auto a = random_cluster(3, 4, spec, 5);
  auto b = a;
  auto oa = OuterOptimizer::nesterov(), ob = OuterOptimizer::nesterov();
  ParamVector anchor_a = a[0].x, anchor_b = b[0].x;
  CommLedger la, lb;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (Step t = 1; t <= 64; ++t) {
    for (std::size_t m = 0; m < a.size(); ++m) {
      for (Eigen::Index i = 0; i < 4; ++i) {
        const double z = n(rng);
        a[m].x(i) += z;
        b[m].x(i) += z;
        a[m].bank.first[1](i) -= z;
        b[m].bank.first[1](i) -= z;
      }
    }
    la.append(sync_round(a, periodic, oa, anchor_a, t).ledger);
    lb.append(sync_round(b, prob, ob, anchor_b, t, forced).ledger);
  }
  for (std::size_t m = 0; m < a.size(); ++m) {
    EXPECT_EQ(a[m].x, b[m].x);
    EXPECT_EQ(a[m].bank.first[1], b[m].bank.first[1]);
  }
  EXPECT_EQ(la.totals(), lb.totals());
}

TEST(CommLedger, PeriodicTotalsMatchFloorCounts) {
  const Eigen::Index d = 7;
  const Step T = 1000;
  const auto spec = OptimizerSpec::adam({0.9, 0.99}, 0.999, {0.3, 0.3}, 0.1);
  auto ws = random_cluster(2, d, spec, 8);
  const auto schedule = SyncSchedule::periodic(32, {45, 100}, 693);
  auto outer = OuterOptimizer::average();
  ParamVector anchor = ws[0].x;
  CommLedger ledger;
  for (Step t = 1; t <= T; ++t) ledger.append(sync_round(ws, schedule, outer, anchor, t).ledger);
  EXPECT_EQ(ledger.total(), d * (T / 32 + T / 45 + T / 100 + T / 693));
  EXPECT_EQ(ledger.total("u2"), d * (T / 100));
}

TEST(CommLedger, CsvFormat) {
  CommLedger l;
  l.record(32, "x", 10);
  l.record(64, "u1", 10);
  std::ostringstream os;
  l.write_csv(os);
  EXPECT_EQ(os.str(), "step,state_class,floats_transferred\n32,x,10\n64,u1,10\n");
}

TEST(CommReductionFactor, Examples) {
  EXPECT_NEAR(comm_reduction_factor(SyncSchedule::periodic(32, {32}, 32)), 32.0 / 3.0, 1e-12);
  EXPECT_NEAR(comm_reduction_factor(SyncSchedule::periodic(1, {1}, 1)), 1.0 / 3.0, 1e-15);
  const double hl = comm_reduction_factor(SyncSchedule::periodic(32, {693}, 6931));
  EXPECT_NEAR(hl, 1.0 / (1.0 / 32 + 1.0 / 693 + 1.0 / 6931), 1e-12);
  EXPECT_NEAR(hl, 30.45, 0.01);
  // No second momentum: the v term drops out.
  EXPECT_NEAR(comm_reduction_factor(SyncSchedule::periodic(32, {32})), 16.0, 1e-12);
}

TEST(SyncSchedule, ValidationNamesKey) {
  try {
    SyncSchedule::periodic(-1, {32}, 32).validate(1, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("schedule.x"), std::string::npos);
  }
  EXPECT_THROW(SyncSchedule::periodic(32, {32}).validate(1, true), Error);
  EXPECT_THROW(SyncSchedule::probabilistic(1.5, {0.5}, std::nullopt, 0).validate(1, false), Error);
}
