#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geox/dm/train.hpp"
#include "geox/ppo/train.hpp"
#include "geox/tensor/grad_check.hpp"

using namespace geox;
using namespace geox::ppo;

namespace {

// Zeroed output weights make the logits equal the output bias.
template <typename S>
void set_logits(ActorCritic<S>& heads, std::array<double, 4> bias) {
  auto& p = heads.parameters();
  p.at("actor.3.weight").value.matrix().setZero();
  for (int j = 0; j < 4; ++j) p.at("actor.3.bias").value.matrix()(0, j) = static_cast<S>(bias[static_cast<std::size_t>(j)]);
}

template <typename S>
Eigen::Array4d action_probs(ActorCritic<S>& heads, const RowVector<S>& f, ActionSet valid) {
  Tape<S> tape(false);
  std::vector<ActionSet> v{valid};
  auto p = heads.probabilities(tape, tape.constant(f), invalid_mask(v)).value();
  Eigen::Array4d out;
  for (int j = 0; j < 4; ++j) out(j) = double(p(0, j));
  return out;
}

WorldSet small_worlds(int n, std::uint64_t seed) {
  std::vector<World> ws;
  for (int i = 0; i < n; ++i) {
    WorldSpec s;
    s.seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    ws.push_back(generate_world(s));
  }
  return make_world_set(std::move(ws));
}

FrozenDm small_dm(const WorldSet& worlds, int epochs) {
  DatasetConfig dc;
  dc.pairs_per_world = 10;
  dc.seed = 4;
  auto ds = build_dataset(worlds, dc);
  dm::DmConfig c;
  c.d_model = 32;
  c.epochs = epochs;
  c.seed = 2;
  return dm::train_dm<float>(ds, worlds, c, {32, GridSpec{}}).model;
}

// A batch whose old log-probs sit at fixed offsets from the current ones, so
// the ratios land in all three clip regions and away from the kinks.
PpoBatch offset_batch(ActorCritic<double>& heads, int n, std::uint64_t seed, const std::vector<double>& offsets) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  PpoBatch b;
  b.features.resize(n, heads.feature_dim());
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = g(rng);
  const ActionSet valid_sets[] = {ActionSet{Action::Down, Action::Right}, ActionSet(0xF),
                                  ActionSet{Action::Up, Action::Left, Action::Right}};
  for (int i = 0; i < n; ++i) {
    const auto valid = valid_sets[i % 3];
    const Eigen::RowVectorXd f = b.features.row(i);
    const auto p = action_probs(heads, RowVector<double>(f), valid);
    Action a = Action::Up;
    for (auto x : kAllActions) {
      if (valid.contains(x)) a = x;
    }
    b.actions.push_back(a);
    b.valid.push_back(valid);
    b.old_log_prob.push_back(std::log(p(static_cast<int>(a))) - offsets[static_cast<std::size_t>(i) % offsets.size()]);
    b.advantages.push_back(i % 2 ? -1.0 - 0.1 * i : 0.5 + 0.2 * i);
    b.returns.push_back(g(rng));
  }
  return b;
}

}  // namespace

TEST(PolicyStepTest, EqualLogitsSplitOverMask) {
  ActorCritic<double> heads(6, 8, 1);
  set_logits(heads, {0, 0, 0, 0});
  const ActionSet valid{Action::Down, Action::Right};
  const auto p = action_probs(heads, RowVector<double>(RowVector<double>::Ones(6)), valid);
  EXPECT_EQ(p(static_cast<int>(Action::Up)), 0.0);
  EXPECT_EQ(p(static_cast<int>(Action::Left)), 0.0);
  EXPECT_DOUBLE_EQ(p(static_cast<int>(Action::Down)), 0.5);
  EXPECT_DOUBLE_EQ(p(static_cast<int>(Action::Right)), 0.5);
}

TEST(PolicyStepTest, ArgmaxPicksBestValidAction) {
  ActorCritic<double> heads(6, 8, 1);
  set_logits(heads, {3.0, 0.5, 1.0, 2.0});  // Up is best but masked below
  Rng rng(0);
  const RowVector<double> f = RowVector<double>(RowVector<double>::Ones(6));
  EXPECT_EQ(policy_step(heads, f, PolicyMode::Argmax, ActionSet(0xF), rng).action, Action::Up);
  const ActionSet no_up{Action::Down, Action::Left, Action::Right};
  EXPECT_EQ(policy_step(heads, f, PolicyMode::Argmax, no_up, rng).action, static_cast<Action>(3));
}

TEST(PolicyStepTest, ArgmaxTieGoesToLowestId) {
  Eigen::Array4d p(0.0, 0.4, 0.2, 0.4);
  Rng rng(0);
  EXPECT_EQ(choose_action(p, PolicyMode::Argmax, rng).action, static_cast<Action>(1));
  EXPECT_THROW(policy_step(*std::make_unique<ActorCritic<double>>(2, 2, 0), RowVector<double>(RowVector<double>::Ones(2)),
                           PolicyMode::Argmax, ActionSet{}, rng),
               ContractViolation);
}

TEST(PolicyStepTest, StochasticFrequenciesMatchSoftmax) {
  ActorCritic<double> heads(4, 8, 2);
  set_logits(heads, {0.0, 1.0, -0.5, 0.7});
  const ActionSet valid{Action::Up, Action::Down, Action::Right};
  const RowVector<double> f = RowVector<double>::Zero(4);
  const auto p = action_probs(heads, f, valid);
  // masked softmax computed independently
  Eigen::Array4d expect(std::exp(0.0), 0.0, 0.0, 0.0);
  for (auto a : valid.actions()) expect(static_cast<int>(a)) = std::exp(std::array<double, 4>{0.0, 1.0, -0.5, 0.7}[static_cast<int>(a)]);
  expect /= expect.sum();
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(p(j), expect(j), 1e-12);

  const int n = 10000;
  Eigen::Array4d counts = Eigen::Array4d::Zero();
  Rng rng(77);
  for (int i = 0; i < n; ++i) {
    auto c = policy_step(heads, f, PolicyMode::Stochastic, valid, rng);
    counts(static_cast<int>(c.action)) += 1;
    EXPECT_NEAR(c.log_prob, std::log(expect(static_cast<int>(c.action))), 1e-12);
  }
  for (int j = 0; j < 4; ++j) {
    const double sigma = std::sqrt(n * expect(j) * (1 - expect(j)));
    EXPECT_LE(std::abs(counts(j) - n * expect(j)), 3 * sigma + 1e-9) << "action " << j;
  }
}

TEST(PolicyStepTest, InvalidActionsNeverChosen) {
  Rng rng(5);
  for (int seed = 0; seed < 20; ++seed) {
    ActorCritic<double> heads(5, 8, static_cast<std::uint64_t>(seed));
    set_logits(heads, {50.0, -3, 2, 1});  // the masked action dominates the raw logits
    const ActionSet valid{Action::Left, Action::Right};
    const auto p = action_probs(heads, RowVector<double>(RowVector<double>::Ones(5)), valid);
    EXPECT_EQ(p(0), 0.0);
    EXPECT_EQ(p(1), 0.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (int i = 0; i < 50; ++i) {
      EXPECT_TRUE(valid.contains(policy_step(heads, RowVector<double>(RowVector<double>::Ones(5)), PolicyMode::Stochastic, valid, rng).action));
    }
  }
}

TEST(ReturnsTest, Examples) {
  auto q = compute_returns(std::vector<double>{1, -1}, 0.99, 0.5);
  EXPECT_NEAR(q[0], 0.50005, 1e-12);
  EXPECT_NEAR(q[1], -1 + 0.99 * 0.5, 1e-12);
  EXPECT_EQ(compute_returns(std::vector<double>{1, 1, 1}, 1.0, 0.0), (std::vector<double>{3, 2, 1}));
  EXPECT_EQ(compute_returns(std::vector<double>{2}, 0.99, 0.0), (std::vector<double>{2}));
  EXPECT_THROW(compute_returns(std::vector<double>{}, 0.99, 0.0), std::invalid_argument);
}

TEST(ReturnsTest, MatchesDirectSummation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(1 + trial % 12));
    for (auto& x : r) x = u(rng);
    const double v = u(rng), gamma = 0.9 + 0.001 * trial;
    const auto q = compute_returns(r, gamma, v);
    for (std::size_t t = 0; t < r.size(); ++t) {
      double s = 0;
      for (std::size_t k = t; k < r.size(); ++k) s += std::pow(gamma, double(k - t)) * r[k];
      s += std::pow(gamma, double(r.size() - t)) * v;
      EXPECT_NEAR(q[t], s, 1e-10);
    }
  }
}

TEST(AdvantageTest, Examples) {
  EXPECT_NEAR(advantage(std::vector<double>{0.5}, std::vector<double>{0.2})[0], 0.3, 1e-15);
  EXPECT_EQ(advantage(std::vector<double>{0.7}, std::vector<double>{0.7})[0], 0.0);
  EXPECT_EQ(advantage(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), (std::vector<double>{-2, 0, 2}));
  EXPECT_THROW(advantage(std::vector<double>{1}, std::vector<double>{}), std::invalid_argument);
}

TEST(SurrogateTest, UnitValues) {
  for (double a : {-2.0, -0.5, 0.0, 0.3, 4.0}) EXPECT_EQ(clipped_surrogate(1.0, a, 0.2), a);
  EXPECT_EQ(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
  EXPECT_EQ(clipped_surrogate(2.0, 3.0, 0.2), 1.2 * 3.0);
  // a negative advantage keeps the pessimistic unclipped term
  EXPECT_EQ(clipped_surrogate(2.0, -1.0, 0.2), -2.0);
  EXPECT_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
}

TEST(SurrogateTest, ClipBound) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> r(0.0, 3.0), a(-5, 5);
  const double eps = 0.2;
  for (int i = 0; i < 10000; ++i) {
    const double ratio = r(rng), adv = a(rng);
    const double s = clipped_surrogate(ratio, adv, eps);
    EXPECT_LE(s, (1 + eps) * std::abs(adv) + 1e-12);
    // the magnitude bound holds except where the unclipped pessimistic term wins
    if (adv >= 0 || ratio <= 1 + eps) EXPECT_LE(std::abs(s), (1 + eps) * std::abs(adv) + 1e-12);
  }
}

TEST(EntropyTest, UniformIsLn4) {
  const std::vector<double> u(4, 0.25);
  EXPECT_NEAR(entropy(u), std::log(4.0), 1e-9);
  EXPECT_EQ(entropy(std::vector<double>{1, 0, 0, 0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5, 0, 0}), std::log(2.0), 1e-15);
}

TEST(PpoLossTest, EntropyOfUniformHeads) {
  ActorCritic<double> heads(3, 4, 0);
  set_logits(heads, {0, 0, 0, 0});
  PpoBatch b;
  b.features = Eigen::MatrixXd::Ones(2, 3);
  b.actions = {Action::Up, Action::Down};
  b.valid = {ActionSet(0xF), ActionSet(0xF)};
  b.old_log_prob = {std::log(0.25), std::log(0.25)};
  b.advantages = {1, 3};
  b.returns = {0, 0};
  Tape<double> tape(false);
  auto l = ppo_losses(tape, heads, b, PpoConfig{});
  EXPECT_NEAR(l.entropy.item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(l.actor.item(), 2.0, 1e-12);
}

TEST(PpoLossTest, FreshOldPolicyGivesMeanAdvantage) {
  ActorCritic<double> heads(6, 8, 4);
  auto b = offset_batch(heads, 9, 1, {0.0});
  Tape<double> tape(false);
  auto l = ppo_losses(tape, heads, b, PpoConfig{});
  const double mean_a = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / double(b.size());
  EXPECT_NEAR(l.actor.item(), mean_a, 1e-12);
}

TEST(PpoLossTest, TotalCombinesTermsWithSigns) {
  ActorCritic<double> heads(6, 8, 4);
  auto b = offset_batch(heads, 6, 2, {0.3, -0.4});
  PpoConfig cfg;
  Tape<double> tape(false);
  auto l = ppo_losses(tape, heads, b, cfg);
  EXPECT_NEAR(l.total.item(), -l.actor.item() + 0.5 * l.critic.item() - 0.01 * l.entropy.item(), 1e-12);
  cfg.strict_entropy_sign = true;
  Tape<double> t2(false);
  auto s = ppo_losses(t2, heads, b, cfg);
  EXPECT_NEAR(s.total.item(), -s.actor.item() + 0.5 * s.critic.item() + 0.01 * s.entropy.item(), 1e-12);
}

TEST(PpoLossTest, GradientMatchesFiniteDifferences) {
  ActorCritic<double> heads(5, 6, 9);
  // log-ratio offsets: inside the clip range, above it, below it
  const std::vector<double> offsets{0.0, 0.05, 0.6, -0.7, -0.08};
  auto b = offset_batch(heads, 10, 3, offsets);
  PpoConfig cfg;
  auto r = grad_check<double>(
      [&](Tape<double>& tape) { return ppo_losses(tape, heads, b, cfg).total; }, heads.parameters(), 1e-6);
  EXPECT_GT(r.checked, 200u);
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_parameter << "[" << r.worst_index << "]";
}

TEST(PpoLossTest, MaskedLogitsReceiveNoGradient) {
  ActorCritic<double> heads(4, 5, 1);
  PpoBatch b;
  b.features = Eigen::MatrixXd::Ones(1, 4);
  b.actions = {Action::Down};
  b.valid = {ActionSet{Action::Down, Action::Right}};
  b.old_log_prob = {std::log(0.5)};
  b.advantages = {1.0};
  b.returns = {0.0};
  heads.parameters().zero_grad();
  Tape<double> tape;
  tape.backward(ppo_losses(tape, heads, b, PpoConfig{}).total);
  const auto& g = heads.parameters().at("actor.3.bias").grad.matrix();
  EXPECT_EQ(g(0, static_cast<int>(Action::Up)), 0.0);
  EXPECT_EQ(g(0, static_cast<int>(Action::Left)), 0.0);
  EXPECT_NE(g(0, static_cast<int>(Action::Down)), 0.0);
}

TEST(PpoLossTest, RejectsInconsistentBatch) {
  ActorCritic<double> heads(4, 5, 1);
  PpoBatch b;
  Tape<double> tape(false);
  EXPECT_THROW(ppo_losses(tape, heads, b, PpoConfig{}), std::invalid_argument);
  b.features = Eigen::MatrixXd::Ones(2, 4);
  b.actions = {Action::Up};
  EXPECT_THROW(ppo_losses(tape, heads, b, PpoConfig{}), std::invalid_argument);
}

TEST(PpoConfigTest, ValidationAndRecord) {
  PpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.clip = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.entropy_weight = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.seed = 12345;
  c.learning_rate = 3e-4;
  auto back = PpoConfig::from_record(c.to_record());
  EXPECT_EQ(back.to_record(), c.to_record());
}

TEST(ActorCriticTest, CheckpointRoundTrip) {
  ActorCritic<float> heads(8, 16, 3);
  const auto path = std::filesystem::temp_directory_path() / "geox_heads_test.ckpt";
  save_checkpoint(path.string(), heads.checkpoint());
  auto back = ActorCritic<float>::from_checkpoint(load_checkpoint<float>(path.string()));
  std::filesystem::remove(path);
  const RowVector<float> f = RowVector<float>::LinSpaced(8, -1, 1);
  Tape<float> t1(false), t2(false);
  EXPECT_EQ(heads.logits(t1, t1.constant(f)).value(), back.logits(t2, t2.constant(f)).value());
}

class TrainCeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    worlds_ = new WorldSet(small_worlds(8, 31));
    dm_ = new FrozenDm(small_dm(*worlds_, 3));
  }
  static void TearDownTestSuite() {
    delete dm_;
    delete worlds_;
  }
  static WorldSet* worlds_;
  static FrozenDm* dm_;
};
WorldSet* TrainCeTest::worlds_ = nullptr;
FrozenDm* TrainCeTest::dm_ = nullptr;

TEST_F(TrainCeTest, BackboneStaysFrozen) {
  const auto before = dm_->checkpoint();
  CeConfig cfg;
  cfg.ppo.epochs = 3;
  train_ce(*dm_, *worlds_, cfg);
  const auto after = dm_->checkpoint();
  ASSERT_EQ(before.params.size(), after.params.size());
  for (std::size_t i = 0; i < before.params.size(); ++i) {
    EXPECT_EQ(before.params[i].value.matrix(), after.params[i].value.matrix()) << before.params[i].name;
  }
}

TEST_F(TrainCeTest, ZeroBetaIsExtrinsicOnly) {
  CeConfig cfg;
  cfg.ppo.epochs = 2;
  cfg.reward.beta = 0.0;
  cfg.trace = true;
  auto r = train_ce(*dm_, *worlds_, cfg);
  ASSERT_EQ(r.trace.size(), 2u * 16);
  bool saw_intrinsic = false;
  for (const auto& ep : r.trace) {
    for (const auto& b : ep) {
      EXPECT_EQ(b.r_ce, b.r_ex);
      saw_intrinsic |= b.r_in_norm != 0.0;
    }
  }
  EXPECT_TRUE(saw_intrinsic);  // computed and traced, just weighted out
}

TEST_F(TrainCeTest, LogShapeAndDeterminism) {
  CeConfig cfg;
  cfg.ppo.epochs = 12;
  cfg.ppo.seed = 4;
  auto a = train_ce(*dm_, *worlds_, cfg);
  auto b = train_ce(*dm_, *worlds_, cfg);
  ASSERT_EQ(a.log.size(), 12u);
  EXPECT_EQ(format_ce_log_csv(a.log), format_ce_log_csv(b.log));
  EXPECT_GE(a.log[9].probe_sr, 0.0);   // every 10 rounds
  EXPECT_GE(a.log[11].probe_sr, 0.0);  // and the last
  EXPECT_LT(a.log[4].probe_sr, 0.0);
  const auto csv = format_ce_log_csv(a.log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,mean_r_ex,mean_r_in_norm,mean_r_ce,L_actor,L_critic,H,probe_SR");
}

TEST_F(TrainCeTest, ExtrinsicRewardTrendsUpward) {
  // 8 worlds, 50 rounds, 5 seeds: mean episodic r_ex of the last 10 rounds
  // against the first 10
  std::vector<double> gains;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CeConfig cfg;
    cfg.ppo.epochs = 50;
    cfg.ppo.seed = seed;
    cfg.ppo.probe_episodes = 0;
    auto r = train_ce(*dm_, *worlds_, cfg);
    double early = 0, late = 0;
    for (int i = 0; i < 10; ++i) {
      early += r.log[static_cast<std::size_t>(i)].r_ex;
      late += r.log[static_cast<std::size_t>(40 + i)].r_ex;
    }
    gains.push_back((late - early) / 10.0);
  }
  std::sort(gains.begin(), gains.end());
  EXPECT_GT(gains[2], 0.0) << "median gain " << gains[2];
}

TEST(RewardHelpersTest, ExtrinsicRewardsOfAPath) {
  EpisodeRecord ep;
  ep.task.goal = {0, 2};
  // right, left (revisit), right (revisit), right onto the goal
  ep.path = {{0, 0}, {0, 1}, {0, 0}, {0, 1}, {0, 2}};
  EXPECT_EQ(extrinsic_rewards(ep), (std::vector<double>{1, -1, -1, 2}));
  const World w = generate_world(WorldSpec{});
  EXPECT_THROW(intrinsic_rewards(ep, w, IntrinsicKind::Mse), std::invalid_argument);
}
