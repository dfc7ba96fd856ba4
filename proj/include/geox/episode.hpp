#pragma once

#include <functional>
#include <vector>

#include "geox/dm/model.hpp"
#include "geox/grid.hpp"
#include "geox/world.hpp"

namespace geox {

using FrozenDm = dm::DynamicsModel<float>;

struct EpisodeTask {
  std::uint32_t world_id = 0;
  Position start;
  Position goal;
  Modality modality = Modality::Aerial;
};

/// What a policy sees before acting. `dm` holds the model outputs on the
/// prefix ending at the current state, or is null when no model is attached.
struct Observation {
  const World& world;
  const EpisodeState& state;
  Position goal;
  ActionSet valid;
  const dm::DmOutput<float>* dm;
};

using Policy = std::function<Action(const Observation&, Rng&)>;

struct EpisodeRecord {
  EpisodeTask task;
  std::vector<Position> path;  // start first
  std::vector<Action> actions;
  bool success = false;
  int final_distance = 0;
  // with a model attached: the predicted embedding of path[t+1], made at action token t
  std::vector<Eigen::RowVectorXd> predictions;
};

/// Runs one episode to success or budget exhaustion. With a model, every
/// decision sees the outputs on the current prefix; the model's budget must
/// fit its context.
EpisodeRecord run_episode(const World& world, const EpisodeTask& task, FrozenDm* dm, const Policy& policy, Rng& rng);

/// Feeds prefixes of one episode to the model.
class DmSession {
 public:
  DmSession(FrozenDm& dm, const World& world, Eigen::RowVectorXd goal, Position start);
  void push(Action a, Position next);
  const dm::DmOutput<float>& output() const { return out_; }

 private:
  FrozenDm& dm_;
  const World& world_;
  Eigen::RowVectorXd goal_;
  std::vector<Position> positions_;
  std::vector<Action> actions_;
  dm::DmOutput<float> out_;
};

/// Visited-set before each move, for reward computation.
std::vector<Position> visited_before(const std::vector<Position>& path, std::size_t t);

}  // namespace geox
