#include "geox/episode.hpp"

#include <algorithm>
#include <optional>

namespace geox {

DmSession::DmSession(FrozenDm& dm, const World& world, Eigen::RowVectorXd goal, Position start)
    : dm_(dm), world_(world), goal_(std::move(goal)), positions_{start} {
  out_ = dm_.infer(dm::encode_sequence(world_, goal_, positions_, actions_, dm_.config().context_length()));
}

void DmSession::push(Action a, Position next) {
  actions_.push_back(a);
  positions_.push_back(next);
  out_ = dm_.infer(dm::encode_sequence(world_, goal_, positions_, actions_, dm_.config().context_length()));
}

EpisodeRecord run_episode(const World& world, const EpisodeTask& task, FrozenDm* dm, const Policy& policy, Rng& rng) {
  const GridSpec& grid = world.grid();
  if (task.start == task.goal) throw ContractViolation("run_episode: start equals goal");
  if (dm && dm->config().max_steps < grid.budget) {
    throw std::invalid_argument("run_episode: model context covers " + std::to_string(dm->config().max_steps) +
                                " steps, budget is " + std::to_string(grid.budget));
  }
  EpisodeRecord rec;
  rec.task = task;
  rec.path.push_back(task.start);
  auto state = start_episode(task.start, task.goal, grid);
  std::optional<DmSession> session;
  if (dm) session.emplace(*dm, world, goal_embedding(world, task.goal, task.modality), task.start);
  while (!state.done) {
    const Observation obs{world, state, task.goal, valid_actions(state.position, grid),
                          session ? &session->output() : nullptr};
    const Action a = policy(obs, rng);
    state = step(state, a, task.goal, grid);
    rec.actions.push_back(a);
    rec.path.push_back(state.position);
    if (session) {
      session->push(a, state.position);
      const auto& sp = session->output().state_predictions;
      rec.predictions.push_back(sp.row(sp.rows() - 1).cast<double>());
    }
  }
  rec.success = state.success;
  rec.final_distance = manhattan(state.position, task.goal);
  return rec;
}

std::vector<Position> visited_before(const std::vector<Position>& path, std::size_t t) {
  std::vector<Position> v;
  for (std::size_t i = 0; i <= t && i < path.size(); ++i) {
    if (std::find(v.begin(), v.end(), path[i]) == v.end()) v.push_back(path[i]);
  }
  return v;
}

}  // namespace geox
