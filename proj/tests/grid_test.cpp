#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "geox/grid.hpp"

using namespace geox;

namespace {

const GridSpec k5;

// Brute-force enumeration of ordered pairs at a given distance.
std::vector<std::pair<Position, Position>> enumerate_pairs(const GridSpec& g, int c) {
  std::vector<std::pair<Position, Position>> out;
  for (int a = 0; a < g.cells(); ++a) {
    for (int b = 0; b < g.cells(); ++b) {
      Position p{a / g.cols, a % g.cols}, q{b / g.cols, b % g.cols};
      if (std::abs(p.row - q.row) + std::abs(p.col - q.col) == c) out.emplace_back(p, q);
    }
  }
  return out;
}

}  // namespace

TEST(ValidActionsTest, CornersAndInterior) {
  EXPECT_EQ(valid_actions({0, 0}, k5), (ActionSet{Action::Down, Action::Right}));
  EXPECT_EQ(valid_actions({2, 2}, k5).size(), 4);
  EXPECT_EQ(valid_actions({4, 0}, k5), (ActionSet{Action::Up, Action::Right}));
}

TEST(ValidActionsTest, NeverEmptyAndAlwaysInBounds) {
  for (GridSpec g : {GridSpec{1, 2, 3}, GridSpec{2, 1, 1}, GridSpec{3, 7, 4}, k5}) {
    for (int i = 0; i < g.cells(); ++i) {
      auto p = cell_position(i, g);
      auto v = valid_actions(p, g);
      EXPECT_FALSE(v.empty());
      for (auto a : kAllActions) EXPECT_EQ(v.contains(a), in_bounds(moved(p, a), g));
    }
  }
}

TEST(StepTest, MoveRight) {
  auto s = start_episode({2, 2}, {0, 0}, k5);
  auto n = step(s, Action::Right, {0, 0}, k5);
  EXPECT_EQ(n.position, (Position{2, 3}));
  EXPECT_EQ(n.step, 1);
  EXPECT_FALSE(n.done);
  ASSERT_EQ(n.visited.size(), 2u);
  EXPECT_EQ(n.visited.front(), (Position{2, 2}));
}

TEST(StepTest, ReachingGoalEndsEpisode) {
  const Position goal{1, 1};
  auto s = start_episode({1, 2}, goal, k5);
  auto n = step(s, Action::Left, goal, k5);
  EXPECT_TRUE(n.success);
  EXPECT_TRUE(n.done);
}

TEST(StepTest, BudgetExhaustion) {
  GridSpec g{5, 5, 3};
  const Position goal{4, 4};
  auto s = start_episode({0, 0}, goal, g);
  s = step(s, Action::Right, goal, g);
  s = step(s, Action::Left, goal, g);
  EXPECT_FALSE(s.done);
  s = step(s, Action::Right, goal, g);
  EXPECT_TRUE(s.done);
  EXPECT_FALSE(s.success);
  EXPECT_EQ(s.visited.size(), 2u);  // revisits are not duplicated
}

TEST(StepTest, ContractViolations) {
  const Position goal{4, 4};
  auto s = start_episode({0, 0}, goal, k5);
  EXPECT_THROW(step(s, Action::Up, goal, k5), ContractViolation);
  GridSpec g{5, 5, 1};
  auto d = step(start_episode({0, 0}, goal, g), Action::Down, goal, g);
  ASSERT_TRUE(d.done);
  EXPECT_THROW(step(d, Action::Down, goal, g), ContractViolation);
}

TEST(ManhattanTest, Examples) {
  EXPECT_EQ(manhattan({0, 0}, {4, 4}), 8);
  EXPECT_EQ(manhattan({1, 3}, {1, 3}), 0);
  EXPECT_EQ(manhattan({0, 2}, {3, 1}), 4);
}

TEST(PairSamplingTest, OppositeCornersAtMaxDistance) {
  auto oracle = enumerate_pairs(k5, 8);
  ASSERT_EQ(oracle.size(), 4u);
  auto pairs = pairs_at_distance(k5, 8);
  std::sort(pairs.begin(), pairs.end());
  std::sort(oracle.begin(), oracle.end());
  EXPECT_EQ(pairs, oracle);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    auto [s, g] = sample_pair_at_distance(k5, 8, rng);
    EXPECT_EQ(manhattan(s, g), 8);
  }
}

TEST(PairSamplingTest, CountsMatchBruteForce) {
  for (int c = 1; c <= 8; ++c) EXPECT_EQ(pairs_at_distance(k5, c).size(), enumerate_pairs(k5, c).size()) << c;
}

TEST(PairSamplingTest, RejectsUnachievable) {
  Rng rng(1);
  EXPECT_THROW(sample_pair_at_distance(k5, 0, rng), std::invalid_argument);
  EXPECT_THROW(sample_pair_at_distance(k5, 9, rng), std::invalid_argument);
}

TEST(PairSamplingTest, UniformChiSquare) {
  const int c = 4;
  auto pairs = pairs_at_distance(k5, c);
  std::map<std::pair<Position, Position>, int> counts;
  Rng rng(99);
  const int draws = 200 * static_cast<int>(pairs.size());
  for (int i = 0; i < draws; ++i) ++counts[sample_pair_at_distance(k5, c, rng)];
  ASSERT_EQ(counts.size(), pairs.size());
  const double expected = double(draws) / double(pairs.size());
  double chi2 = 0.0;
  for (auto& [k, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  // Wilson-Hilferty approximation of the p=0.001 critical value.
  const double dof = double(pairs.size() - 1);
  const double h = 2.0 / (9.0 * dof);
  EXPECT_LT(chi2, dof * std::pow(1.0 - h + 3.09 * std::sqrt(h), 3));
}

TEST(GridPropertyTest, UnitMovesAlwaysChangeSquaredDistance) {
  for (int a = 0; a < k5.cells(); ++a) {
    for (int b = 0; b < k5.cells(); ++b) {
      auto p = cell_position(a, k5), g = cell_position(b, k5);
      for (auto act : valid_actions(p, k5).actions()) {
        EXPECT_GE(std::abs(squared_distance(moved(p, act), g) - squared_distance(p, g)), 1);
      }
    }
  }
}

TEST(GridPropertyTest, EpisodesTerminateWithinBudget) {
  Rng rng(4);
  for (int trial = 0; trial < 2000; ++trial) {
    auto [start, goal] = sample_pair_at_distance(k5, 1 + trial % 8, rng);
    auto s = start_episode(start, goal, k5);
    int moves = 0;
    while (!s.done) {
      auto acts = valid_actions(s.position, k5).actions();
      std::uniform_int_distribution<std::size_t> pick(0, acts.size() - 1);
      s = step(s, acts[pick(rng)], goal, k5);
      ++moves;
    }
    EXPECT_LE(moves, k5.budget);
    EXPECT_LE(s.visited.size(), static_cast<std::size_t>(k5.budget + 1));
    EXPECT_EQ(s.done, s.success || s.step == k5.budget);
    if (s.success) EXPECT_EQ(s.position, goal);
  }
}

TEST(GridSpecTest, Validation) {
  EXPECT_THROW((GridSpec{1, 1, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((GridSpec{5, 5, 0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW(k5.validate());
}
