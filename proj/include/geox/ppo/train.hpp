#pragma once

#include <functional>
#include <string>
#include <vector>

#include "geox/episode.hpp"
#include "geox/ppo/agent.hpp"
#include "geox/reward.hpp"
#include "geox/trajectory.hpp"

namespace geox::ppo {

struct CeConfig {
  PpoConfig ppo;
  RewardConfig reward;
  std::vector<int> distances{4, 5, 6, 7, 8};
  Modality modality = Modality::Aerial;
  bool trace = false;
};

struct CeEpochLog {
  int epoch = 0;
  double r_ex = 0.0;       // mean episodic sum
  double r_in_norm = 0.0;  // mean episodic sum
  double r_ce = 0.0;       // mean episodic sum
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;
  double probe_sr = -1.0;  // argmax success ratio on the probe set; negative when not measured this round
};

std::string format_ce_log_csv(const std::vector<CeEpochLog>& log);

struct TrainCeResult {
  ActorCritic<float> heads;
  std::vector<CeEpochLog> log;
  std::vector<std::vector<RewardBreakdown>> trace;  // one entry per rollout episode when tracing
};

/// Policy over the model's features at the latest state token. Requires a
/// model attached to the episode.
Policy ce_policy(ActorCritic<float>& heads, PolicyMode mode);

/// Rewards of one finished episode with model predictions attached; the
/// normalized intrinsic values are filled in by the caller.
std::vector<double> extrinsic_rewards(const EpisodeRecord& ep);
std::vector<double> intrinsic_rewards(const EpisodeRecord& ep, const World& world, IntrinsicKind kind);

/// Alternates stochastic rollouts under pi_old with clipped PPO updates and
/// resyncs pi_old after every `sync_period` optimization epochs. The model is
/// never modified. Throws DivergenceError on a non-finite loss.
TrainCeResult train_ce(const FrozenDm& dm, const WorldSet& worlds, const CeConfig& config,
                       const std::function<void(const CeEpochLog&)>& on_epoch = {});

}  // namespace geox::ppo
