#include "geox/ppo/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "geox/errors.hpp"
#include "geox/tensor/adam.hpp"

namespace geox::ppo {

namespace {

struct StepRecord {
  Eigen::RowVectorXd feature;
  Action action;
  ActionSet valid;
  double log_prob;
  double value;
};

EpisodeTask draw_task(const WorldSet& worlds, const std::vector<int>& distances, Modality modality, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_world(0, worlds.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_c(0, distances.size() - 1);
  const auto w = pick_world(rng);
  const int c = distances[pick_c(rng)];
  auto [start, goal] = sample_pair_at_distance(worlds.worlds[w].grid(), c, rng);
  return EpisodeTask{worlds.refs[w].id, start, goal, modality};
}

double value_of(ActorCritic<float>& heads, const RowVector<float>& f) {
  Tape<float> tape(false);
  return heads.values(tape, tape.constant(f)).item();
}

}  // namespace

std::string format_ce_log_csv(const std::vector<CeEpochLog>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,mean_r_ex,mean_r_in_norm,mean_r_ce,L_actor,L_critic,H,probe_SR\n";
  for (const auto& r : log) {
    os << r.epoch << ',' << r.r_ex << ',' << r.r_in_norm << ',' << r.r_ce << ',' << r.actor << ',' << r.critic << ','
       << r.entropy << ',';
    if (r.probe_sr >= 0.0) os << r.probe_sr;
    os << '\n';
  }
  return os.str();
}

Policy ce_policy(ActorCritic<float>& heads, PolicyMode mode) {
  return [&heads, mode](const Observation& obs, Rng& rng) {
    if (!obs.dm) throw ContractViolation("ce policy: no model outputs attached");
    return policy_step(heads, obs.dm->last_state_features(), mode, obs.valid, rng).action;
  };
}

std::vector<double> extrinsic_rewards(const EpisodeRecord& ep) {
  std::vector<double> r;
  for (std::size_t t = 0; t + 1 < ep.path.size(); ++t) {
    r.push_back(extrinsic_reward(ep.path[t], ep.path[t + 1], ep.task.goal, visited_before(ep.path, t)));
  }
  return r;
}

std::vector<double> intrinsic_rewards(const EpisodeRecord& ep, const World& world, IntrinsicKind kind) {
  if (ep.predictions.size() + 1 != ep.path.size()) {
    throw std::invalid_argument("intrinsic_rewards: episode carries no model predictions");
  }
  std::vector<double> r;
  for (std::size_t t = 0; t < ep.predictions.size(); ++t) {
    r.push_back(intrinsic_reward(ep.predictions[t], world.patch(ep.path[t + 1]), kind));
  }
  return r;
}

TrainCeResult train_ce(const FrozenDm& dm_in, const WorldSet& worlds, const CeConfig& config,
                       const std::function<void(const CeEpochLog&)>& on_epoch) {
  const auto& pc = config.ppo;
  pc.validate();
  if (worlds.size() == 0) throw std::invalid_argument("train_ce: no worlds");
  if (config.distances.empty()) throw std::invalid_argument("train_ce: empty distance set");
  if (!(config.reward.beta >= 0.0)) throw std::invalid_argument("train_ce: beta must be >= 0");
  FrozenDm dm = dm_in;  // rollouts read a private copy; the caller's model is untouched

  TrainCeResult result{ActorCritic<float>(dm.config().d_model, pc.hidden, derive_seed(pc.seed, {1})), {}, {}};
  auto& heads = result.heads;
  Adam<float> adam(heads.parameters(), AdamConfig{pc.learning_rate});
  RunningRange running;

  std::vector<EpisodeTask> probes;
  {
    Rng rng(derive_seed(pc.seed, {0x9b0e}));
    for (int i = 0; i < pc.probe_episodes; ++i) probes.push_back(draw_task(worlds, config.distances, config.modality, rng));
  }
  auto probe = [&]() {
    if (probes.empty()) return -1.0;
    auto policy = ce_policy(heads, PolicyMode::Argmax);
    int wins = 0;
    for (const auto& task : probes) {
      Rng rng(0);
      wins += run_episode(worlds.by_id(task.world_id), task, &dm, policy, rng).success;
    }
    return double(wins) / double(probes.size());
  };

  for (int epoch = 1; epoch <= pc.epochs; ++epoch) {
    // pi_old: the heads as they stand when the batch is collected
    ActorCritic<float> old = heads;
    std::vector<EpisodeRecord> episodes;
    std::vector<std::vector<StepRecord>> steps;
    for (int e = 0; e < pc.episodes_per_round; ++e) {
      Rng rng(derive_seed(pc.seed, {2, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(e)}));
      const auto task = draw_task(worlds, config.distances, config.modality, rng);
      std::vector<StepRecord> rec;
      Policy policy = [&](const Observation& obs, Rng& r) {
        const RowVector<float> f = obs.dm->last_state_features();
        auto choice = policy_step(old, f, PolicyMode::Stochastic, obs.valid, r);
        rec.push_back(StepRecord{f.cast<double>(), choice.action, obs.valid, choice.log_prob, value_of(old, f)});
        return choice.action;
      };
      episodes.push_back(run_episode(worlds.by_id(task.world_id), task, &dm, policy, rng));
      steps.push_back(std::move(rec));
    }

    std::vector<std::vector<double>> r_ex, r_in;
    for (const auto& ep : episodes) {
      r_ex.push_back(extrinsic_rewards(ep));
      r_in.push_back(intrinsic_rewards(ep, worlds.by_id(ep.task.world_id), config.reward.kind));
    }
    const auto r_norm = normalize_rollout(r_in, config.reward.scope, running);

    PpoBatch batch;
    std::size_t total_steps = 0;
    for (const auto& s : steps) total_steps += s.size();
    batch.features.resize(static_cast<Eigen::Index>(total_steps), dm.config().d_model);
    CeEpochLog row;
    row.epoch = epoch;
    Eigen::Index k = 0;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      std::vector<double> r_ce, values;
      std::vector<RewardBreakdown> trace;
      for (std::size_t t = 0; t < r_ex[e].size(); ++t) {
        const auto b = make_breakdown(r_ex[e][t], r_in[e][t], r_norm[e][t], config.reward);
        r_ce.push_back(b.r_ce);
        row.r_ex += b.r_ex;
        row.r_in_norm += b.r_in_norm;
        row.r_ce += b.r_ce;
        if (config.trace) trace.push_back(b);
      }
      if (config.trace) result.trace.push_back(std::move(trace));
      // every episode ends on success or an exhausted budget, so nothing is bootstrapped
      const auto q = compute_returns(r_ce, pc.gamma, 0.0);
      for (const auto& s : steps[e]) values.push_back(s.value);
      const auto a = advantage(q, values);
      for (std::size_t t = 0; t < steps[e].size(); ++t, ++k) {
        const auto& s = steps[e][t];
        batch.features.row(k) = s.feature;
        batch.actions.push_back(s.action);
        batch.valid.push_back(s.valid);
        batch.old_log_prob.push_back(s.log_prob);
        batch.returns.push_back(q[t]);
        batch.advantages.push_back(a[t]);
      }
    }
    const double ne = double(episodes.size());
    row.r_ex /= ne;
    row.r_in_norm /= ne;
    row.r_ce /= ne;

    Rng shuffle(derive_seed(pc.seed, {3, static_cast<std::uint64_t>(epoch)}));
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto mb = static_cast<std::size_t>(pc.minibatch);
    for (int pass = 0; pass < pc.sync_period; ++pass) {
      std::shuffle(order.begin(), order.end(), shuffle);
      double actor = 0.0, critic = 0.0, ent = 0.0;
      for (std::size_t start = 0; start < order.size(); start += mb) {
        const std::size_t end = std::min(order.size(), start + mb);
        const auto sub = batch.subset(std::span<const std::size_t>(order).subspan(start, end - start));
        adam.zero_grad();
        Tape<float> tape;
        auto l = ppo_losses(tape, heads, sub, pc);
        if (!std::isfinite(l.total.item())) {
          std::ostringstream os;
          os << "train_ce: non-finite loss at epoch " << epoch << " (actor=" << l.actor.item()
             << ", critic=" << l.critic.item() << ", entropy=" << l.entropy.item() << ")";
          throw DivergenceError(os.str());
        }
        tape.backward(l.total);
        adam.step();
        const double w = double(end - start) / double(order.size());
        actor += w * l.actor.item();
        critic += w * l.critic.item();
        ent += w * l.entropy.item();
      }
      row.actor = actor;
      row.critic = critic;
      row.entropy = ent;
    }
    if (epoch % pc.probe_every == 0 || epoch == pc.epochs) row.probe_sr = probe();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace geox::ppo
