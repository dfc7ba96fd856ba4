#pragma once

#include <map>
#include <string>
#include <vector>

#include "geox/episode.hpp"
#include "geox/ppo/agent.hpp"
#include "geox/reward.hpp"
#include "geox/trajectory.hpp"

namespace geox {

struct EvalConfig {
  std::vector<int> distances{4, 5, 6, 7, 8};
  int pairs_per_world = 5;
  Modality modality = Modality::Aerial;
  int trials = 1;  // repeated runs of each pair, for stochastic policies
  std::uint64_t seed = 0;

  void validate(const GridSpec& grid) const;
};

struct EpisodeOutcome {
  std::uint32_t world_id = 0;
  int pair = 0;
  int trial = 0;
  int distance = 0;
  EpisodeRecord record;
};

struct VisitStatistics {
  std::vector<long> counts;  // per cell, row-major
  long total = 0;
  double inside_ratio = 0.0;
  double edge_ratio = 0.0;
};

struct EvalReport {
  GridSpec grid;
  std::map<int, double> sr;
  std::map<int, double> sg;
  std::map<int, int> attempts;
  std::vector<EpisodeOutcome> episodes;
  VisitStatistics visits;
};

Policy random_policy();
/// Follows the lowest-id optimal action toward the goal.
Policy oracle_policy();
/// Moves away from the goal whenever a valid action allows it.
Policy anti_oracle_policy();
/// Argmax of the model's own action logits over valid actions.
Policy dm_argmax_policy();

/// Plays every (world, distance, pair, trial). Pairs are drawn from
/// (seed, world id, distance, pair); policy randomness from the trial as well.
EvalReport evaluate(const Policy& policy, const WorldSet& worlds, const EvalConfig& config, FrozenDm* dm = nullptr);

struct SrEstimate {
  double sr = 0.0;
  double stderr_ = 0.0;
  long episodes = 0;
};

/// Uniform valid-action walks from uniformly drawn pairs at distance C.
SrEstimate random_policy_sr(const GridSpec& grid, int distance, long episodes, Rng& rng);

/// Every position of every path counts as one visit, the start included.
VisitStatistics patch_visit_statistics(const std::vector<std::vector<Position>>& paths, const GridSpec& grid);

struct GoalPath {
  Position goal;
  Modality modality = Modality::Aerial;
  std::vector<Position> path;
};

struct CuriosityMap {
  std::vector<double> mean;        // per cell; NaN where no step entered the cell
  std::vector<long> entries;       // steps entering each cell
  std::vector<double> normalized;  // mean rescaled to [0, 1] over visited cells
};

/// Mean raw intrinsic reward of the steps entering each patch.
CuriosityMap curiosity_trace(FrozenDm& dm, const World& world, const std::vector<GoalPath>& paths, IntrinsicKind kind);

enum class RenderFormat { Ascii, Svg };
std::string render_path(const World& world, const std::vector<Position>& path, Position goal, RenderFormat format);

/// One row per (C, metric).
std::string format_report_csv(const EvalReport& report);
/// Visit histogram and ratios as JSON.
std::string format_visits_json(const EvalReport& report);
/// One row per episode with its path.
std::string format_episodes_csv(const EvalReport& report);

}  // namespace geox
