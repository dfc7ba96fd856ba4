#include "geox/dm/train.hpp"

namespace geox::dm {

std::string format_dm_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,L_Action,L_State,L_DM\n";
  for (const auto& r : log) os << r.epoch << ',' << r.action << ',' << r.state << ',' << r.total << '\n';
  return os.str();
}

std::vector<PreparedTrajectory> prepare_trajectories(const Dataset& dataset, const WorldSet& worlds,
                                                     int context_length) {
  std::vector<PreparedTrajectory> out;
  out.reserve(dataset.trajectories.size());
  for (const auto& t : dataset.trajectories) {
    const World& w = worlds.by_id(t.world_id);
    if (t.labels.size() != t.actions.size() || t.positions.size() != t.actions.size() + 1) {
      throw std::invalid_argument("dm: malformed trajectory for world " + std::to_string(t.world_id));
    }
    out.push_back(PreparedTrajectory{encode_sequence(t, w, context_length), t.labels});
  }
  return out;
}

}  // namespace geox::dm
