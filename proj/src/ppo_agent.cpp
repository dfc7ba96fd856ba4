#include "geox/ppo/agent.hpp"

#include <algorithm>
#include <sstream>

namespace geox::ppo {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo config: gamma must be in (0, 1]");
  if (!(clip > 0.0)) throw std::invalid_argument("ppo config: clip must be > 0");
  if (!(critic_weight >= 0.0) || !(entropy_weight >= 0.0)) {
    throw std::invalid_argument("ppo config: critic and entropy weights must be >= 0");
  }
  if (sync_period < 1) throw std::invalid_argument("ppo config: sync period must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo config: learning rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("ppo config: epochs must be >= 0");
  if (episodes_per_round < 1 || minibatch < 1 || hidden < 1) {
    throw std::invalid_argument("ppo config: episodes, minibatch and hidden width must be >= 1");
  }
  if (probe_every < 1 || probe_episodes < 0) throw std::invalid_argument("ppo config: bad probe settings");
}

KeyValues PpoConfig::to_record() const {
  return {{"gamma", fmt(gamma)},
          {"clip", fmt(clip)},
          {"critic_weight", fmt(critic_weight)},
          {"entropy_weight", fmt(entropy_weight)},
          {"sync_period", std::to_string(sync_period)},
          {"learning_rate", fmt(learning_rate)},
          {"epochs", std::to_string(epochs)},
          {"episodes_per_round", std::to_string(episodes_per_round)},
          {"minibatch", std::to_string(minibatch)},
          {"hidden", std::to_string(hidden)},
          {"strict_entropy_sign", strict_entropy_sign ? "1" : "0"},
          {"probe_every", std::to_string(probe_every)},
          {"probe_episodes", std::to_string(probe_episodes)},
          {"seed", std::to_string(seed)}};
}

PpoConfig PpoConfig::from_record(const KeyValues& kv) {
  PpoConfig c;
  auto get = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(std::string("ppo hyperparameters: missing '") + k + "'");
    return it->second;
  };
  try {
    c.gamma = std::stod(get("gamma"));
    c.clip = std::stod(get("clip"));
    c.critic_weight = std::stod(get("critic_weight"));
    c.entropy_weight = std::stod(get("entropy_weight"));
    c.sync_period = std::stoi(get("sync_period"));
    c.learning_rate = std::stod(get("learning_rate"));
    c.epochs = std::stoi(get("epochs"));
    c.episodes_per_round = std::stoi(get("episodes_per_round"));
    c.minibatch = std::stoi(get("minibatch"));
    c.hidden = std::stoi(get("hidden"));
    c.strict_entropy_sign = get("strict_entropy_sign") == "1";
    c.probe_every = std::stoi(get("probe_every"));
    c.probe_episodes = std::stoi(get("probe_episodes"));
    c.seed = std::stoull(get("seed"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("ppo hyperparameters: malformed value (") + e.what() + ")");
  }
  return c;
}

const char* to_string(PolicyMode m) { return m == PolicyMode::Argmax ? "argmax" : "stochastic"; }

PolicyMode policy_mode_from_string(const std::string& s) {
  if (s == "argmax") return PolicyMode::Argmax;
  if (s == "stochastic") return PolicyMode::Stochastic;
  throw std::invalid_argument("unknown policy mode '" + s + "' (argmax|stochastic)");
}

Mask invalid_mask(std::span<const ActionSet> valid) {
  Mask m(static_cast<Eigen::Index>(valid.size()), kActionCount);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    for (int j = 0; j < kActionCount; ++j) {
      m(static_cast<Eigen::Index>(i), j) = valid[i].contains(static_cast<Action>(j)) ? 0 : 1;
    }
  }
  return m;
}

PolicyChoice choose_action(const Eigen::Array4d& p, PolicyMode mode, Rng& rng) {
  int pick = -1;
  if (mode == PolicyMode::Argmax) {
    for (int j = 0; j < kActionCount; ++j) {
      if (p(j) > 0.0 && (pick < 0 || p(j) > p(pick))) pick = j;
    }
  } else {
    const double total = p.sum();
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (int j = 0; j < kActionCount; ++j) {
      if (!(p(j) > 0.0)) continue;
      acc += p(j);
      pick = j;
      if (u < acc) break;
    }
  }
  if (pick < 0) throw ContractViolation("choose_action: no action with positive probability");
  return PolicyChoice{static_cast<Action>(pick), std::log(p(pick) / p.sum())};
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma, double terminal_value) {
  if (rewards.empty()) throw std::invalid_argument("compute_returns: empty reward list");
  std::vector<double> q(rewards.size());
  double acc = terminal_value;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    q[i] = acc;
  }
  return q;
}

std::vector<double> advantage(std::span<const double> q, std::span<const double> v) {
  if (q.size() != v.size()) throw std::invalid_argument("advantage: length mismatch");
  std::vector<double> a(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) a[i] = q[i] - v[i];
  return a;
}

double clipped_surrogate(double ratio, double adv, double clip) {
  return std::min(ratio * adv, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

PpoBatch PpoBatch::subset(std::span<const std::size_t> rows) const {
  PpoBatch b;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    b.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(r));
    b.actions.push_back(actions[r]);
    b.valid.push_back(valid[r]);
    b.old_log_prob.push_back(old_log_prob[r]);
    b.advantages.push_back(advantages[r]);
    b.returns.push_back(returns[r]);
  }
  return b;
}

}  // namespace geox::ppo
