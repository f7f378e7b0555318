#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "hvf/envs.hpp"

namespace hvf {
namespace {

Action move(std::size_t dir) { return Action{dir, {}}; }

Cell target_cell(const Observation& o) {
  return {static_cast<int>(std::lround(o[2] * 7)), static_cast<int>(std::lround(o[3] * 7))};
}

EnvConfig config(const std::string& name, std::uint64_t seed, double sigma = 0.0) {
  EnvConfig c;
  c.name = name;
  c.seed = seed;
  c.noise_sigma = sigma;
  return c;
}

TEST(MoveClamped, Directions) {
  EXPECT_EQ(move_clamped({3, 3}, 0), (Cell{3, 4}));
  EXPECT_EQ(move_clamped({3, 3}, 1), (Cell{3, 2}));
  EXPECT_EQ(move_clamped({3, 3}, 2), (Cell{2, 3}));
  EXPECT_EQ(move_clamped({3, 3}, 3), (Cell{4, 3}));
  EXPECT_EQ(move_clamped({3, 7}, 0), (Cell{3, 7}));
  EXPECT_EQ(move_clamped({0, 0}, 2), (Cell{0, 0}));
  EXPECT_THROW(move_clamped({0, 0}, 4), std::invalid_argument);
}

TEST(GridTrack, SeededResetIsDeterministic) {
  GridTrack a(config("grid_track", 42)), b(config("grid_track", 42));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.reset(), b.reset());
}

TEST(GridTrack, ResetPlacesDistinctCells) {
  GridTrack env(config("grid_track", 1));
  for (int i = 0; i < 1000; ++i) {
    env.reset();
    EXPECT_NE(env.agent(), env.target());
  }
}

TEST(GridTrack, ResetCellsUniform) {
  // Chi-squared over the 64 agent cells; 99.9% quantile for 63 dof is ~103.4.
  GridTrack env(config("grid_track", 7));
  const int n = 10000;
  std::map<int, int> counts;
  for (int i = 0; i < n; ++i) {
    env.reset();
    ++counts[env.agent().x * 8 + env.agent().y];
  }
  const double expected = n / 64.0;
  double chi2 = 0.0;
  for (int c = 0; c < 64; ++c) chi2 += std::pow(counts[c] - expected, 2) / expected;
  EXPECT_LT(chi2, 103.4);
}

TEST(GridTrack, RewardAfterBothMoves) {
  // Target starts one above (3,4) and must step down onto it.
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 200 && !seen; ++seed) {
    GridTrack env(config("grid_track", seed));
    env.reset();
    env.set_state({0, 1}, {3, 5});
    const Transition t = env.step(move(1));
    EXPECT_EQ(env.agent(), (Cell{0, 0}));
    if (target_cell(t.s_next) == Cell{3, 4}) {
      EXPECT_EQ(t.r, -25.0);
      seen = true;
    }
  }
  EXPECT_TRUE(seen);
}

TEST(GridTrack, CoLocatedRewardIsZero) {
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 200 && !seen; ++seed) {
    GridTrack env(config("grid_track", seed));
    env.reset();
    env.set_state({2, 2}, {3, 3});
    const Transition t = env.step(move(3));  // agent to (3,2); target may step down onto it
    if (env.target() == env.agent()) {
      EXPECT_EQ(t.r, 0.0);
      seen = true;
    }
  }
  EXPECT_TRUE(seen);
}

TEST(GridTrack, TopRowMovingUpIsClamped) {
  GridTrack env(config("grid_track", 3));
  env.reset();
  env.set_state({4, 7}, {0, 0});
  env.step(move(0));
  EXPECT_EQ(env.agent(), (Cell{4, 7}));
}

TEST(GridTrack, RewardBoundsAndLatticeObservations) {
  GridTrack env(config("grid_track", 5));
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dir(0, 3);
  for (int ep = 0; ep < 200; ++ep) {
    env.reset();
    while (!env.done()) {
      const Transition t = env.step(move(dir(rng)));
      EXPECT_GE(t.r, -98.0);
      EXPECT_LE(t.r, 0.0);
      for (double v : t.s_next) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v * 7, std::round(v * 7), 1e-12);
      }
    }
    EXPECT_EQ(env.steps(), kGridEpisodeCap);
  }
}

TEST(GridTrack, StepAfterDoneRejected) {
  GridTrack env(config("grid_track", 0));
  env.reset();
  while (!env.done()) env.step(move(0));
  EXPECT_THROW(env.step(move(0)), EpisodeDoneError);
}

TEST(GridTrack, SameSeedSameEpisode) {
  auto run = [] {
    GridTrack env(config("grid_track", 99));
    std::vector<double> trace;
    env.reset();
    for (std::size_t i = 0; !env.done(); ++i) {
      const Transition t = env.step(move(i % 4));
      trace.insert(trace.end(), t.s_next.begin(), t.s_next.end());
      trace.push_back(t.r);
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(GridMigrate, ResetAvoidsGoal) {
  GridMigrate env(config("grid_migrate", 2));
  for (int i = 0; i < 2000; ++i) {
    env.reset();
    EXPECT_NE(env.agent(), GridMigrate::kGoal);
  }
}

TEST(GridMigrate, GoalStepNoiseless) {
  GridMigrate env(config("grid_migrate", 0));
  env.reset();
  env.set_agent({6, 7});
  const Transition t = env.step(move(3));
  EXPECT_EQ(t.r, 1.0);
  EXPECT_TRUE(t.done);
  EXPECT_TRUE(t.reached_goal);
}

TEST(GridMigrate, NonGoalStepNoiseless) {
  GridMigrate env(config("grid_migrate", 0));
  env.reset();
  env.set_agent({2, 2});
  const Transition t = env.step(move(0));
  EXPECT_EQ(t.r, 0.0);
  EXPECT_FALSE(t.done);
}

TEST(GridMigrate, NoiseMoments) {
  GridMigrate env(config("grid_migrate", 17, 0.9));
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (env.done()) env.reset();
    env.set_agent({0, 0});
    const Transition t = env.step(move(1));
    ASSERT_FALSE(t.reached_goal);
    sum += t.r;
    sq += t.r * t.r;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean), 3 * 0.9 / std::sqrt(n));
  EXPECT_LT(std::abs(sd - 0.9) / 0.9, 0.02);
}

TEST(GridMigrate, NoiselessEpisodeRewardIsZeroOrOne) {
  GridMigrate env(config("grid_migrate", 4));
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dir(0, 3);
  for (int ep = 0; ep < 500; ++ep) {
    env.reset();
    double total = 0.0;
    while (!env.done()) total += env.step(move(dir(rng))).r;
    EXPECT_TRUE(total == 0.0 || total == 1.0) << total;
  }
}

TEST(PointTracker, ResetLayout) {
  PointTracker env(config("point_tracker", 8));
  for (int i = 0; i < 100; ++i) {
    const Observation o = env.reset();
    ASSERT_EQ(o.size(), 6u);
    EXPECT_EQ(o[0], 0.0);
    EXPECT_EQ(o[1], 0.0);
    EXPECT_LE(std::abs(o[4]), 1.0);
    EXPECT_LE(std::abs(o[5]), 1.0);
  }
}

TEST(PointTracker, OnTargetZeroReward) {
  EnvConfig c = config("point_tracker", 1);
  c.target_step_std = 0.0;
  PointTracker env(c);
  env.reset();
  env.set_state({0.2, -0.4}, {0.2, -0.4});
  EXPECT_EQ(env.step(Action{0, {0.0, 0.0}}).r, 0.0);
}

TEST(PointTracker, DistanceReward) {
  EnvConfig c = config("point_tracker", 1);
  c.target_step_std = 0.0;
  PointTracker env(c);
  env.reset();
  env.set_state({0.0, 0.0}, {0.3, 0.4});
  EXPECT_NEAR(env.step(Action{0, {0.0, 0.0}}).r, -0.25, 1e-12);
}

TEST(PointTracker, ActionScaleAndClip) {
  EnvConfig c = config("point_tracker", 1);
  c.target_step_std = 0.0;
  PointTracker env(c);
  env.reset();
  env.set_state({1.45, 0.0}, {0.0, 0.0});
  const Transition t = env.step(Action{0, {5.0, -0.5}});
  EXPECT_DOUBLE_EQ(t.s_next[0], 1.5);
  EXPECT_DOUBLE_EQ(t.s_next[1], -0.05);
  EXPECT_NEAR(t.s_next[2], 0.05, 1e-12);
}

TEST(PointTracker, TargetStepStd) {
  PointTracker env(config("point_tracker", 21));
  const int n = 10000;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (env.done()) env.reset();
    env.set_state({0.0, 0.0}, {0.0, 0.0});
    const Transition t = env.step(Action{0, {0.0, 0.0}});
    sq += t.s_next[4] * t.s_next[4];
  }
  EXPECT_LT(std::abs(std::sqrt(sq / n) - 0.05) / 0.05, 0.03);
}

TEST(PointTracker, ObservationsStayInBounds) {
  PointTracker env(config("point_tracker", 6));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int ep = 0; ep < 50; ++ep) {
    env.reset();
    while (!env.done()) {
      const Transition t = env.step(Action{0, {u(rng), u(rng)}});
      for (std::size_t k : {0, 1, 4, 5}) EXPECT_LE(std::abs(t.s_next[k]), 1.5);
      for (std::size_t k : {2, 3}) EXPECT_LE(std::abs(t.s_next[k]), 0.1 + 1e-12);
    }
    EXPECT_EQ(env.steps(), kPointEpisodeCap);
  }
}

TEST(MakeEnv, KnownNames) {
  EXPECT_EQ(make_env(config("grid_track", 0))->obs_dim(), 4u);
  EXPECT_EQ(make_env(config("grid_migrate", 0))->obs_dim(), 2u);
  EXPECT_FALSE(make_env(config("point_tracker", 0))->discrete());
  EXPECT_THROW(make_env(config("mujoco", 0)), std::invalid_argument);
  EnvConfig bad = config("grid_track", 0);
  bad.episode_cap = -1;
  EXPECT_THROW(make_env(bad), std::invalid_argument);
}

}  // namespace
}  // namespace hvf
