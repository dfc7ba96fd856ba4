#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geox/errors.hpp"

namespace geox {

using Rng = std::mt19937_64;

struct GridSpec {
  int rows = 5;
  int cols = 5;
  int budget = 10;

  int cells() const { return rows * cols; }
  int max_distance() const { return (rows - 1) + (cols - 1); }
  /// Throws std::invalid_argument unless rows*cols >= 2 and budget >= 1.
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

struct Position {
  int row = 0;
  int col = 0;

  auto operator<=>(const Position&) const = default;
};

std::string to_string(Position p);

/// Bird's-eye moves with row 0 at the top.
enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr int kActionCount = 4;
inline constexpr std::array<Action, kActionCount> kAllActions{Action::Up, Action::Down, Action::Left, Action::Right};

const char* to_string(Action a);
Action action_from_index(int index);

/// Subset of the four actions as a 4-bit mask (bit i = action i).
class ActionSet {
 public:
  constexpr ActionSet() = default;
  constexpr explicit ActionSet(std::uint8_t bits) : bits_(bits & 0xF) {}
  ActionSet(std::initializer_list<Action> actions) {
    for (auto a : actions) insert(a);
  }

  constexpr bool contains(Action a) const { return (bits_ >> static_cast<int>(a)) & 1U; }
  void insert(Action a) { bits_ = static_cast<std::uint8_t>(bits_ | (1U << static_cast<int>(a))); }
  int size() const { return __builtin_popcount(bits_); }
  bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  std::vector<Action> actions() const;

  bool operator==(const ActionSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

bool in_bounds(Position p, const GridSpec& spec);
Position moved(Position p, Action a);
ActionSet valid_actions(Position p, const GridSpec& spec);
int manhattan(Position p, Position q);
int squared_distance(Position p, Position q);
/// Row-major cell index.
int cell_index(Position p, const GridSpec& spec);
Position cell_position(int index, const GridSpec& spec);
bool is_edge(Position p, const GridSpec& spec);

struct EpisodeState {
  Position position;
  int step = 0;
  std::vector<Position> visited;  // insertion order, no duplicates
  bool done = false;
  bool success = false;

  bool has_visited(Position p) const;
};

/// Fresh episode; the start counts as visited.
EpisodeState start_episode(Position start, Position goal, const GridSpec& spec);

/// Applies one move. Throws ContractViolation on a finished episode or an
/// action that would leave the grid.
EpisodeState step(const EpisodeState& state, Action action, Position goal, const GridSpec& spec);

/// All ordered (start, goal) pairs at exactly the given Manhattan distance.
std::vector<std::pair<Position, Position>> pairs_at_distance(const GridSpec& spec, int distance);

/// Uniform draw over pairs_at_distance. Throws std::invalid_argument when the
/// distance is 0 or not achievable on the grid.
std::pair<Position, Position> sample_pair_at_distance(const GridSpec& spec, int distance, Rng& rng);

}  // namespace geox
