#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "geox/dm/train.hpp"
#include "geox/tensor/grad_check.hpp"

using namespace geox;
using namespace geox::dm;

namespace {

struct Fixture {
  WorldSet worlds;
  Dataset dataset;
};

Fixture make_fixture(int worlds, int pairs, std::uint64_t seed, const GridSpec& grid = {}, int dim = 32, int steps = 10) {
  std::vector<World> ws;
  for (int i = 0; i < worlds; ++i) {
    WorldSpec s;
    s.grid = grid;
    s.embed_dim = dim;
    s.seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    ws.push_back(generate_world(s));
  }
  Fixture f{make_world_set(std::move(ws)), {}};
  DatasetConfig cfg;
  cfg.pairs_per_world = pairs;
  cfg.steps = steps;
  cfg.seed = seed;
  if (grid.max_distance() < 8) {
    cfg.distances.clear();
    for (int c = 1; c <= grid.max_distance(); ++c) cfg.distances.push_back(c);
  }
  f.dataset = build_dataset(f.worlds, cfg);
  return f;
}

DmConfig small_config() {
  DmConfig c;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(EncodeTest, SingleStatePrefix) {
  auto f = make_fixture(1, 1, 1);
  const auto& w = f.worlds.worlds[0];
  std::vector<Position> pos{{0, 0}};
  auto seq = encode_sequence(w, w.patch({3, 3}), pos, {}, DmConfig{}.context_length());
  EXPECT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq.kinds[0], TokenKind::Goal);
  EXPECT_EQ(seq.kinds[1], TokenKind::State);
  EXPECT_EQ(seq.offsets[0], (Position{0, 0}));
}

TEST(EncodeTest, FullTrajectoryAlternates) {
  auto f = make_fixture(1, 1, 1);
  const auto& t = f.dataset.trajectories[0];
  DmConfig cfg;
  EXPECT_EQ(cfg.context_length(), 23);
  auto seq = encode_sequence(t, f.worlds.worlds[0], cfg.context_length());
  // goal + 11 states + 10 actions
  EXPECT_EQ(seq.size(), 22u);
  EXPECT_EQ(seq.kinds[0], TokenKind::Goal);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    EXPECT_EQ(seq.kinds[i], i % 2 == 1 ? TokenKind::State : TokenKind::Action);
  }
  // one more trailing action still fits the context
  std::vector<Action> acts = t.actions;
  acts.push_back(valid_actions(t.positions.back(), GridSpec{}).actions().front());
  EXPECT_EQ(encode_sequence(f.worlds.worlds[0], seq.goal, t.positions, acts, cfg.context_length()).size(), 23u);
}

TEST(EncodeTest, RejectsOversizedAndEmptyPrefix) {
  auto f = make_fixture(1, 1, 1);
  const auto& t = f.dataset.trajectories[0];
  EXPECT_THROW(encode_sequence(t, f.worlds.worlds[0], 21), std::invalid_argument);
  const auto& w = f.worlds.worlds[0];
  EXPECT_THROW(encode_sequence(w, w.patch({1, 1}), std::vector<Position>{}, {}, 23), std::invalid_argument);
}

TEST(ForwardTest, OutputShapes) {
  auto f = make_fixture(1, 1, 2);
  DynamicsModel<float> model(small_config(), {32, GridSpec{}}, 1);
  const auto& traj = f.dataset.trajectories[0];
  auto out = model.infer(encode_sequence(traj, f.worlds.worlds[0], 23));
  EXPECT_EQ(out.action_logits.rows(), 11);
  EXPECT_EQ(out.action_logits.cols(), 4);
  EXPECT_EQ(out.state_predictions.rows(), 10);
  EXPECT_EQ(out.state_predictions.cols(), 32);
  Tape<float> tape(false);
  auto loss = dm_loss(model, tape, traj, f.worlds.worlds[0], 1.0);
  EXPECT_EQ(loss.state_terms, 9u);  // s_1..s_9

  std::vector<Position> one{traj.positions[0]};
  auto single = model.infer(encode_sequence(f.worlds.worlds[0], f.worlds.worlds[0].patch(traj.goal), one, {}, 23));
  EXPECT_EQ(single.action_logits.rows(), 1);
  EXPECT_EQ(single.state_predictions.rows(), 0);
}

TEST(ForwardTest, CausalityUnderFutureChanges) {
  auto f = make_fixture(2, 4, 3);
  DynamicsModel<float> model(small_config(), {32, GridSpec{}}, 7);
  const auto& w = f.worlds.worlds[0];
  for (const auto& t : f.dataset.trajectories) {
    if (t.world_id != 0) continue;
    auto full = encode_sequence(t, w, 23);
    auto base = model.infer(full);
    for (std::size_t k = 1; k < full.state_count(); ++k) {
      // rewrite every state and action after state k, keep the length
      auto altered = full;
      for (Eigen::Index r = static_cast<Eigen::Index>(k) + 1; r < altered.states.rows(); ++r) {
        altered.states.row(r) = f.worlds.worlds[1].embeddings.row(r);
        altered.offsets[static_cast<std::size_t>(r)] = Position{4, 4};
      }
      for (std::size_t a = k; a < altered.actions.size(); ++a) {
        altered.actions[a] = static_cast<Action>((static_cast<int>(altered.actions[a]) + 1) % 4);
      }
      auto out = model.infer(altered);
      for (std::size_t s = 0; s <= k; ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        EXPECT_EQ(0, std::memcmp(out.action_logits.row(row).data(), base.action_logits.row(row).data(), 4 * sizeof(float)))
            << "state " << s << " prefix " << k;
      }
      for (std::size_t a = 0; a < k; ++a) {
        const auto row = static_cast<Eigen::Index>(a);
        EXPECT_TRUE((out.state_predictions.row(row).array() == base.state_predictions.row(row).array()).all());
      }
    }
  }
}

TEST(LossTest, ActionLossExamples) {
  Tape<double> tape;
  // uniform probabilities, one labelled action
  Matrix<double> y1 = Matrix<double>::Zero(1, 4);
  y1(0, 2) = 1;
  auto l1 = action_loss(tape.constant(Matrix<double>::Zero(1, 4)), y1);
  EXPECT_NEAR(l1.item(), -std::log(0.25) - 3 * std::log(0.75), 1e-12);
  EXPECT_NEAR(l1.item(), 2.2493, 1e-4);

  // two labels sharing all the mass
  Matrix<double> logits(1, 4);
  logits << 0, 0, -1e4, -1e4;
  Matrix<double> y2(1, 4);
  y2 << 1, 1, 0, 0;
  auto l2 = action_loss(tape.constant(logits), y2);
  EXPECT_NEAR(l2.item(), 2 * -std::log(0.5), 1e-9);

  // near one-hot on the labelled action
  Matrix<double> sharp(1, 4);
  sharp << 0, 0, 15, 0;
  EXPECT_LT(action_loss(tape.constant(sharp), y1).item(), 1e-5);
  EXPECT_GT(action_loss(tape.constant(sharp), y1).item(), 0.0);

  // sums over steps
  Matrix<double> two = Matrix<double>::Zero(2, 4);
  Matrix<double> y3 = Matrix<double>::Zero(2, 4);
  y3(0, 0) = y3(1, 3) = 1;
  EXPECT_NEAR(action_loss(tape.constant(two), y3).item(), 2 * l1.item(), 1e-12);
}

TEST(LossTest, StateLossExamples) {
  Tape<double> tape;
  Matrix<double> obs = Matrix<double>::Random(2, 5);
  EXPECT_EQ(state_loss(tape.constant(obs), obs).item(), 0.0);
  Matrix<double> pred = obs;
  pred(0, 1) += 1.0;
  EXPECT_DOUBLE_EQ(state_loss(tape.constant(Matrix<double>(pred.topRows(1))), Matrix<double>(obs.topRows(1))).item(),
                   1.0);
  pred(1, 3) -= 2.0;
  EXPECT_DOUBLE_EQ(state_loss(tape.constant(pred), obs).item(), 5.0);
}

TEST(LossTest, GoalStepsExcludedFromActionLoss) {
  auto f = make_fixture(1, 1, 1);
  auto t = f.dataset.trajectories[0];
  t.labels[3] = ActionSet{};
  const auto labelled = std::count_if(t.labels.begin(), t.labels.end(), [](ActionSet s) { return !s.empty(); });
  DynamicsModel<double> model(small_config(), {32, GridSpec{}}, 1);
  Tape<double> tape(false);
  auto l = dm_loss(model, tape, t, f.worlds.worlds[0], 1.0);
  EXPECT_EQ(l.action_terms, static_cast<std::size_t>(labelled));
  EXPECT_LT(labelled, 10);
}

TEST(GradientTest, DmLossMatchesFiniteDifferences) {
  const GridSpec grid{3, 3, 3};
  auto f = make_fixture(1, 1, 5, grid, 4, 3);
  DmConfig cfg;
  cfg.d_model = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.max_steps = 3;
  DynamicsModel<double> model(cfg, {4, grid}, 2);
  const auto& traj = f.dataset.trajectories[0];
  const auto seq = encode_sequence(traj, f.worlds.worlds[0], cfg.context_length());
  auto objective = [&](Tape<double>& t) { return dm_loss(model, t, seq, traj.labels, 1.0).total; };
  auto r = grad_check<double>(objective, model.parameters());
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_parameter;
  EXPECT_GT(r.checked, 100u);
}

TEST(TrainTest, TinyDatasetOverfits) {
  auto f = make_fixture(2, 2, 11);
  ASSERT_EQ(f.dataset.trajectories.size(), 4u);
  auto cfg = small_config();
  cfg.epochs = 200;
  cfg.learning_rate = 1e-3;
  auto r = train_dm<float>(f.dataset, f.worlds, cfg, {32, GridSpec{}});
  ASSERT_EQ(r.log.size(), 201u);
  EXPECT_LT(r.log.back().total, 0.5 * r.log.front().total);
}

TEST(TrainTest, AlphaZeroLeavesStateHeadWithoutGradient) {
  auto f = make_fixture(1, 1, 4);
  DynamicsModel<double> model(small_config(), {32, GridSpec{}}, 1);
  model.parameters().zero_grad();
  Tape<double> tape;
  tape.backward(dm_loss(model, tape, f.dataset.trajectories[0], f.worlds.worlds[0], 0.0).total);
  for (const auto* p : model.parameters_named("state_head")) EXPECT_TRUE(p->grad.matrix().isZero()) << p->name;
  bool any = false;
  for (const auto* p : model.parameters_named("action_head")) any |= !p->grad.matrix().isZero();
  EXPECT_TRUE(any);
}

TEST(TrainTest, CheckpointRoundTrip) {
  auto f = make_fixture(1, 2, 6);
  auto cfg = small_config();
  cfg.epochs = 1;
  auto r = train_dm<float>(f.dataset, f.worlds, cfg, {32, GridSpec{}});
  auto path = std::filesystem::temp_directory_path() / "geox_dm_test.ckpt";
  save_checkpoint(path, r.model.checkpoint());
  auto back = DynamicsModel<float>::from_checkpoint(load_checkpoint<float>(path));
  EXPECT_TRUE(back.parameters().same_values(r.model.parameters()));
  auto seq = encode_sequence(f.dataset.trajectories[0], f.worlds.worlds[0], 23);
  EXPECT_EQ(back.infer(seq).action_logits, r.model.infer(seq).action_logits);
}

TEST(AccuracyTest, OracleLogitsScorePerfectly) {
  auto f = make_fixture(2, 5, 8);
  for (const auto& t : f.dataset.trajectories) {
    Eigen::MatrixXd logits = label_matrix<double>(t.labels);
    EXPECT_DOUBLE_EQ(accuracy_from_logits(logits, t.labels), 1.0);
  }
}

TEST(AccuracyTest, UntrainedModelsNearChance) {
  auto f = make_fixture(8, 10, 12);
  double acc = 0.0, chance = 0.0;
  const int models = 6;
  for (int m = 0; m < models; ++m) {
    DynamicsModel<float> model(small_config(), {32, GridSpec{}}, 100 + m);
    auto ev = evaluate_dm(model, f.dataset, f.worlds);
    acc += ev.action_accuracy / models;
    chance += ev.chance / models;
  }
  EXPECT_NEAR(acc, chance, 0.12);
}

TEST(GoalConditioningTest, DistinctGoalsGiveDistinctLogits) {
  WorldSpec s;
  s.class_noise = 0.0;
  s.seed = 1;
  auto w = generate_world(s);
  Position a{0, 0};
  Position goal_a{-1, -1}, goal_b{-1, -1};
  for (int i = 0; i < w.grid().cells(); ++i) {
    auto p = cell_position(i, w.grid());
    if (goal_a.row < 0) goal_a = p;
    else if (goal_b.row < 0 && w.terrain(p) != w.terrain(goal_a)) goal_b = p;
  }
  ASSERT_GE(goal_b.row, 0);
  auto f = make_fixture(2, 4, 2);
  auto cfg = small_config();
  cfg.epochs = 5;
  auto r = train_dm<float>(f.dataset, f.worlds, cfg, {32, GridSpec{}});
  std::vector<Position> prefix{a};
  auto la = r.model.infer(encode_sequence(w, w.patch(goal_a), prefix, {}, 23)).action_logits;
  auto lb = r.model.infer(encode_sequence(w, w.patch(goal_b), prefix, {}, 23)).action_logits;
  EXPECT_GT((la - lb).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(TrainTest, DivergenceReported) {
  auto f = make_fixture(1, 2, 6);
  auto cfg = small_config();
  cfg.epochs = 1;
  auto poisoned = f.worlds;
  poisoned.worlds[0].embeddings(0, 0) = std::numeric_limits<double>::quiet_NaN();
  poisoned.worlds[0].embeddings.col(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(train_dm<float>(f.dataset, poisoned, cfg, {32, GridSpec{}}), DivergenceError);
}
