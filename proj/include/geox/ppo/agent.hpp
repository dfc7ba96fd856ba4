#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "geox/grid.hpp"
#include "geox/io.hpp"
#include "geox/tensor/nn.hpp"
#include "geox/tensor/serialize.hpp"

namespace geox::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double clip = 0.2;             // epsilon
  double critic_weight = 0.5;    // omega
  double entropy_weight = 0.01;  // rho
  int sync_period = 4;           // optimization epochs per rollout batch before pi_old is refreshed
  double learning_rate = 1e-4;
  int epochs = 300;              // rollout rounds
  int episodes_per_round = 16;
  int minibatch = 32;
  int hidden = 64;
  bool strict_entropy_sign = false;  // add +rho*H to the minimized loss instead of -rho*H
  int probe_every = 10;
  int probe_episodes = 40;
  std::uint64_t seed = 0;

  void validate() const;
  KeyValues to_record() const;
  static PpoConfig from_record(const KeyValues& kv);
};

enum class PolicyMode { Stochastic, Argmax };
const char* to_string(PolicyMode m);
PolicyMode policy_mode_from_string(const std::string& s);

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 1 marks an action that must be excluded.
Mask invalid_mask(std::span<const ActionSet> valid);

/// Actor and critic, each a tanh MLP with three hidden layers.
template <typename Scalar>
class ActorCritic {
 public:
  static constexpr std::size_t kLayers = 4;

  ActorCritic(int feature_dim, int hidden, std::uint64_t seed) : feature_dim_(feature_dim), hidden_(hidden) {
    std::mt19937_64 rng(seed);
    const auto d = static_cast<std::size_t>(feature_dim), h = static_cast<std::size_t>(hidden);
    actor_ = nn::TanhMlp<Scalar>::create(store_, "actor", {d, h, h, h, std::size_t{kActionCount}}, rng, 0.01);
    critic_ = nn::TanhMlp<Scalar>::create(store_, "critic", {d, h, h, h, 1}, rng, 1.0);
  }

  ActorCritic(int feature_dim, int hidden, ParameterStore<Scalar> store)
      : feature_dim_(feature_dim), hidden_(hidden), store_(std::move(store)) {
    actor_ = nn::TanhMlp<Scalar>::bind(store_, "actor", kLayers);
    critic_ = nn::TanhMlp<Scalar>::bind(store_, "critic", kLayers);
  }

  Var<Scalar> logits(Tape<Scalar>& tape, Var<Scalar> features) { return actor_(tape, store_, features); }
  Var<Scalar> values(Tape<Scalar>& tape, Var<Scalar> features) { return critic_(tape, store_, features); }

  /// Masked action distribution for a batch of feature rows.
  Var<Scalar> probabilities(Tape<Scalar>& tape, Var<Scalar> features, const Mask& invalid) {
    return softmax_rows(masked_fill(logits(tape, features), invalid, Scalar(-1e9)));
  }

  int feature_dim() const { return feature_dim_; }
  int hidden() const { return hidden_; }
  ParameterStore<Scalar>& parameters() { return store_; }
  const ParameterStore<Scalar>& parameters() const { return store_; }

  Checkpoint<Scalar> checkpoint() const {
    Checkpoint<Scalar> c{store_, {}};
    c.hyper["kind"] = "actor_critic";
    c.hyper["feature_dim"] = std::to_string(feature_dim_);
    c.hyper["hidden"] = std::to_string(hidden_);
    c.hyper["precision"] = sizeof(Scalar) == 4 ? "float32" : "float64";
    return c;
  }

  static ActorCritic from_checkpoint(Checkpoint<Scalar> c) {
    if (c.hyper.count("kind") && c.hyper.at("kind") != "actor_critic") {
      throw FormatError("checkpoint is not an actor-critic head (kind=" + c.hyper.at("kind") + ")");
    }
    try {
      return ActorCritic(std::stoi(c.hyper.at("feature_dim")), std::stoi(c.hyper.at("hidden")), std::move(c.params));
    } catch (const std::out_of_range& e) {
      throw FormatError(std::string("actor-critic hyperparameters: ") + e.what());
    }
  }

 private:
  int feature_dim_ = 0;
  int hidden_ = 0;
  ParameterStore<Scalar> store_;
  nn::TanhMlp<Scalar> actor_, critic_;
};

struct PolicyChoice {
  Action action = Action::Up;
  double log_prob = 0.0;
};

/// Picks from a masked distribution. Argmax breaks ties toward the lowest
/// action id; stochastic mode draws one uniform variate.
PolicyChoice choose_action(const Eigen::Array4d& probabilities, PolicyMode mode, Rng& rng);

template <typename Scalar>
PolicyChoice policy_step(ActorCritic<Scalar>& heads, const RowVector<Scalar>& features, PolicyMode mode,
                         ActionSet valid, Rng& rng) {
  if (valid.empty()) throw ContractViolation("policy_step: empty action mask");
  Tape<Scalar> tape(false);
  std::vector<ActionSet> v{valid};
  auto p = heads.probabilities(tape, tape.constant(features), invalid_mask(v)).value();
  Eigen::Array4d probs;
  for (int j = 0; j < kActionCount; ++j) probs(j) = valid.contains(static_cast<Action>(j)) ? double(p(0, j)) : 0.0;
  return choose_action(probs, mode, rng);
}

/// Discounted returns with `terminal_value` bootstrapped after the last reward.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma, double terminal_value);
std::vector<double> advantage(std::span<const double> q, std::span<const double> v);

/// Unclipped and clipped surrogate, whichever is smaller.
double clipped_surrogate(double ratio, double advantage, double clip);
/// Shannon entropy in nats, ignoring zero entries.
double entropy(std::span<const double> probabilities);

struct PpoBatch {
  Eigen::MatrixXd features;  // one row per step
  std::vector<Action> actions;
  std::vector<ActionSet> valid;
  std::vector<double> old_log_prob;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
  PpoBatch subset(std::span<const std::size_t> rows) const;
};

template <typename Scalar>
struct PpoLosses {
  Var<Scalar> actor;    // mean clipped surrogate (maximized)
  Var<Scalar> critic;   // mean squared value error
  Var<Scalar> entropy;  // mean policy entropy
  Var<Scalar> total;    // minimized objective
};

template <typename Scalar>
PpoLosses<Scalar> ppo_losses(Tape<Scalar>& tape, ActorCritic<Scalar>& heads, const PpoBatch& batch,
                             const PpoConfig& config) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("ppo_losses: empty batch");
  if (batch.features.rows() != n || batch.valid.size() != batch.size() || batch.old_log_prob.size() != batch.size() ||
      batch.advantages.size() != batch.size() || batch.returns.size() != batch.size()) {
    throw std::invalid_argument("ppo_losses: inconsistent batch lengths");
  }
  auto to_col = [n](const std::vector<double>& v) {
    Matrix<Scalar> m(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) m(i, 0) = static_cast<Scalar>(v[static_cast<std::size_t>(i)]);
    return m;
  };
  auto x = tape.constant(batch.features.template cast<Scalar>());
  auto masked = masked_fill(heads.logits(tape, x), invalid_mask(batch.valid), Scalar(-1e9));
  auto logp_all = log_softmax_rows(masked);
  std::vector<Eigen::Index> cols;
  for (auto a : batch.actions) cols.push_back(static_cast<Eigen::Index>(a));
  auto logp = pick_cols(logp_all, cols);
  auto ratio = exp(sub(logp, tape.constant(to_col(batch.old_log_prob))));
  auto adv = tape.constant(to_col(batch.advantages));
  const auto eps = static_cast<Scalar>(config.clip);
  auto surrogate = minimum(mul(ratio, adv), mul(clamp(ratio, Scalar(1) - eps, Scalar(1) + eps), adv));

  PpoLosses<Scalar> out;
  out.actor = mean(surrogate);
  auto err = sub(heads.values(tape, x), tape.constant(to_col(batch.returns)));
  out.critic = mean(mul(err, err));
  // masked entries have probability 0 and contribute nothing
  out.entropy = scale(sum(mul(softmax_rows(masked), logp_all)), Scalar(-1.0 / double(n)));
  const auto rho = static_cast<Scalar>(config.strict_entropy_sign ? config.entropy_weight : -config.entropy_weight);
  out.total = add(add(scale(out.actor, Scalar(-1)), scale(out.critic, static_cast<Scalar>(config.critic_weight))),
                  scale(out.entropy, rho));
  return out;
}

}  // namespace geox::ppo
