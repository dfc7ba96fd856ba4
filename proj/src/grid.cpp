#include "geox/grid.hpp"

#include <algorithm>
#include <cstdlib>

namespace geox {

void GridSpec::validate() const {
  if (rows < 1 || cols < 1 || rows * cols < 2) {
    throw std::invalid_argument("grid: need at least two cells, got " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  if (budget < 1) throw std::invalid_argument("grid: budget must be >= 1, got " + std::to_string(budget));
}

std::string to_string(Position p) { return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")"; }

const char* to_string(Action a) {
  switch (a) {
    case Action::Up: return "UP";
    case Action::Down: return "DOWN";
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
  }
  return "?";
}

Action action_from_index(int index) {
  if (index < 0 || index >= kActionCount) throw std::out_of_range("action index " + std::to_string(index));
  return static_cast<Action>(index);
}

std::vector<Action> ActionSet::actions() const {
  std::vector<Action> out;
  for (auto a : kAllActions) {
    if (contains(a)) out.push_back(a);
  }
  return out;
}

bool in_bounds(Position p, const GridSpec& spec) {
  return p.row >= 0 && p.row < spec.rows && p.col >= 0 && p.col < spec.cols;
}

Position moved(Position p, Action a) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
  }
  return p;
}

ActionSet valid_actions(Position p, const GridSpec& spec) {
  ActionSet out;
  for (auto a : kAllActions) {
    if (in_bounds(moved(p, a), spec)) out.insert(a);
  }
  return out;
}

int manhattan(Position p, Position q) { return std::abs(p.row - q.row) + std::abs(p.col - q.col); }

int squared_distance(Position p, Position q) {
  const int dr = p.row - q.row, dc = p.col - q.col;
  return dr * dr + dc * dc;
}

int cell_index(Position p, const GridSpec& spec) { return p.row * spec.cols + p.col; }

Position cell_position(int index, const GridSpec& spec) { return {index / spec.cols, index % spec.cols}; }

bool is_edge(Position p, const GridSpec& spec) {
  return p.row == 0 || p.row == spec.rows - 1 || p.col == 0 || p.col == spec.cols - 1;
}

bool EpisodeState::has_visited(Position p) const {
  return std::find(visited.begin(), visited.end(), p) != visited.end();
}

EpisodeState start_episode(Position start, Position goal, const GridSpec& spec) {
  if (!in_bounds(start, spec) || !in_bounds(goal, spec)) {
    throw ContractViolation("start_episode: position out of bounds");
  }
  EpisodeState s;
  s.position = start;
  s.visited.push_back(start);
  s.success = start == goal;
  s.done = s.success;
  return s;
}

EpisodeState step(const EpisodeState& state, Action action, Position goal, const GridSpec& spec) {
  if (state.done) throw ContractViolation("step: episode already finished");
  if (!valid_actions(state.position, spec).contains(action)) {
    throw ContractViolation(std::string("step: action ") + to_string(action) + " leaves the grid at " +
                            to_string(state.position));
  }
  EpisodeState next = state;
  next.position = moved(state.position, action);
  next.step = state.step + 1;
  if (!next.has_visited(next.position)) next.visited.push_back(next.position);
  next.success = next.position == goal;
  next.done = next.success || next.step >= spec.budget;
  return next;
}

std::vector<std::pair<Position, Position>> pairs_at_distance(const GridSpec& spec, int distance) {
  std::vector<std::pair<Position, Position>> out;
  for (int a = 0; a < spec.cells(); ++a) {
    for (int b = 0; b < spec.cells(); ++b) {
      auto p = cell_position(a, spec), q = cell_position(b, spec);
      if (manhattan(p, q) == distance) out.emplace_back(p, q);
    }
  }
  return out;
}

std::pair<Position, Position> sample_pair_at_distance(const GridSpec& spec, int distance, Rng& rng) {
  if (distance < 1) throw std::invalid_argument("sample_pair_at_distance: start must differ from goal (C >= 1)");
  if (distance > spec.max_distance()) {
    throw std::invalid_argument("sample_pair_at_distance: C=" + std::to_string(distance) + " exceeds grid maximum " +
                                std::to_string(spec.max_distance()));
  }
  auto pairs = pairs_at_distance(spec, distance);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  return pairs[pick(rng)];
}

}  // namespace geox
