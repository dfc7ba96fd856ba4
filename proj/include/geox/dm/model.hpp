#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geox/grid.hpp"
#include "geox/io.hpp"
#include "geox/tensor/nn.hpp"
#include "geox/tensor/serialize.hpp"
#include "geox/trajectory.hpp"
#include "geox/world.hpp"

namespace geox::dm {

struct DmConfig {
  int d_model = 64;
  int layers = 2;
  int heads = 2;
  int max_steps = 10;  // N, actions per trajectory
  double alpha = 1.0;  // state-loss weight
  double learning_rate = 1e-4;
  int epochs = 30;
  int batch_size = 1;
  std::uint64_t seed = 0;

  /// Goal token plus N+1 states and N+1 actions.
  int context_length() const { return 2 * (max_steps + 1) + 1; }
  void validate() const;
  KeyValues to_record() const;
  static DmConfig from_record(const KeyValues& kv);
};

enum class TokenKind : std::uint8_t { Goal, State, Action };

/// Model input before projection: the goal embedding followed by
/// alternating state and action tokens.
struct TokenSequence {
  Eigen::RowVectorXd goal;
  Eigen::MatrixXd states;            // one row per state token
  std::vector<Position> offsets;     // (dr, dc) of each state from the grid's top-left cell
  std::vector<Action> actions;
  std::vector<TokenKind> kinds;

  std::size_t size() const { return kinds.size(); }
  std::size_t state_count() const { return offsets.size(); }
  std::size_t action_count() const { return actions.size(); }
};

/// positions.size() must equal actions.size() (prefix ends on an action) or
/// actions.size() + 1 (prefix ends on a state). Throws std::invalid_argument
/// when empty, malformed or longer than context_length tokens.
TokenSequence encode_sequence(const World& world, const Eigen::RowVectorXd& goal, std::span<const Position> positions,
                              std::span<const Action> actions, int context_length);
TokenSequence encode_sequence(const Trajectory& traj, const World& world, int context_length);

/// Evaluated model outputs for one sequence.
template <typename Scalar>
struct DmOutput {
  Matrix<Scalar> hidden;             // tokens x d_model, after the final norm
  Matrix<Scalar> action_logits;      // one row per state token
  Matrix<Scalar> state_predictions;  // one row per action token: the state that action leads to
  std::vector<Eigen::Index> state_rows;
  std::vector<Eigen::Index> action_rows;

  /// Backbone output at the most recent state token.
  RowVector<Scalar> last_state_features() const { return hidden.row(state_rows.back()); }
};

/// Decoder-only causal transformer with an action head on state tokens and a
/// next-state head on action tokens.
template <typename Scalar>
class DynamicsModel {
 public:
  struct Dims {
    int embed_dim = 32;
    GridSpec grid;
  };

  DynamicsModel(const DmConfig& config, Dims dims, std::uint64_t seed) : config_(config), dims_(dims) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto e = static_cast<std::size_t>(dims_.embed_dim);
    goal_proj_ = nn::Linear<Scalar>::create(store_, "goal_proj", e, d, rng);
    state_proj_ = nn::Linear<Scalar>::create(store_, "state_proj", e, d, rng);
    offset_table_ = store_.add("offset_embedding",
                               nn::normal_tensor<Scalar>({static_cast<std::size_t>(dims_.grid.cells()), d}, 0.5, rng));
    action_table_ = store_.add("action_embedding", nn::normal_tensor<Scalar>({std::size_t{kActionCount}, d}, 0.5, rng));
    index_table_ = store_.add(
        "token_index_embedding",
        nn::normal_tensor<Scalar>({static_cast<std::size_t>(config_.context_length()), d}, 0.5, rng));
    for (int l = 0; l < config_.layers; ++l) {
      const std::string p = "block" + std::to_string(l);
      Block b;
      b.norm1 = nn::LayerNorm<Scalar>::create(store_, p + ".norm1", d);
      b.qkv = nn::Linear<Scalar>::create(store_, p + ".qkv", d, 3 * d, rng);
      b.out = nn::Linear<Scalar>::create(store_, p + ".attn_out", d, d, rng, 0.5);
      b.norm2 = nn::LayerNorm<Scalar>::create(store_, p + ".norm2", d);
      b.fc1 = nn::Linear<Scalar>::create(store_, p + ".fc1", d, 4 * d, rng);
      b.fc2 = nn::Linear<Scalar>::create(store_, p + ".fc2", 4 * d, d, rng, 0.5);
      blocks_.push_back(b);
    }
    final_norm_ = nn::LayerNorm<Scalar>::create(store_, "final_norm", d);
    action_head_ = nn::Linear<Scalar>::create(store_, "action_head", d, kActionCount, rng, 0.1);
    state_head_ = nn::Linear<Scalar>::create(store_, "state_head", d, e, rng, 0.1);
  }

  /// Binds to existing parameters, e.g. from a checkpoint.
  DynamicsModel(const DmConfig& config, Dims dims, ParameterStore<Scalar> params)
      : config_(config), dims_(dims), store_(std::move(params)) {
    config_.validate();
    goal_proj_ = nn::Linear<Scalar>::bind(store_, "goal_proj");
    state_proj_ = nn::Linear<Scalar>::bind(store_, "state_proj");
    offset_table_ = nn::Linear<Scalar>::lookup(store_, "offset_embedding");
    action_table_ = nn::Linear<Scalar>::lookup(store_, "action_embedding");
    index_table_ = nn::Linear<Scalar>::lookup(store_, "token_index_embedding");
    for (int l = 0; l < config_.layers; ++l) {
      const std::string p = "block" + std::to_string(l);
      Block b;
      b.norm1 = nn::LayerNorm<Scalar>::bind(store_, p + ".norm1");
      b.qkv = nn::Linear<Scalar>::bind(store_, p + ".qkv");
      b.out = nn::Linear<Scalar>::bind(store_, p + ".attn_out");
      b.norm2 = nn::LayerNorm<Scalar>::bind(store_, p + ".norm2");
      b.fc1 = nn::Linear<Scalar>::bind(store_, p + ".fc1");
      b.fc2 = nn::Linear<Scalar>::bind(store_, p + ".fc2");
      blocks_.push_back(b);
    }
    final_norm_ = nn::LayerNorm<Scalar>::bind(store_, "final_norm");
    action_head_ = nn::Linear<Scalar>::bind(store_, "action_head");
    state_head_ = nn::Linear<Scalar>::bind(store_, "state_head");
    if (store_[offset_table_].value.shape() !=
        Shape{static_cast<std::size_t>(dims_.grid.cells()), static_cast<std::size_t>(config_.d_model)}) {
      throw std::invalid_argument("dynamics model: offset table does not match grid");
    }
  }

  struct Forward {
    Var<Scalar> hidden;
    Var<Scalar> action_logits;
    Var<Scalar> state_predictions;  // unset when the sequence has no action token
    std::vector<Eigen::Index> state_rows;
    std::vector<Eigen::Index> action_rows;
  };

  Forward forward(Tape<Scalar>& tape, const TokenSequence& seq) {
    if (seq.size() > static_cast<std::size_t>(config_.context_length())) {
      throw std::invalid_argument("dynamics model: sequence of " + std::to_string(seq.size()) +
                                  " tokens exceeds context " + std::to_string(config_.context_length()));
    }
    if (seq.goal.size() != dims_.embed_dim || seq.states.cols() != dims_.embed_dim) {
      throw ShapeError("dynamics model: embedding width does not match model");
    }
    const auto T = static_cast<Eigen::Index>(seq.size());
    const auto d = static_cast<Eigen::Index>(config_.d_model);

    auto goal = goal_proj_(tape, store_, tape.constant(seq.goal.template cast<Scalar>()));
    std::vector<Eigen::Index> offset_ids;
    for (auto o : seq.offsets) offset_ids.push_back(cell_index(o, dims_.grid));
    auto states = add(state_proj_(tape, store_, tape.constant(seq.states.template cast<Scalar>())),
                      embedding(tape.parameter(store_, offset_table_), offset_ids));
    std::vector<Var<Scalar>> parts{goal, states};
    if (!seq.actions.empty()) {
      std::vector<Eigen::Index> ids;
      for (auto a : seq.actions) ids.push_back(static_cast<Eigen::Index>(a));
      parts.push_back(embedding(tape.parameter(store_, action_table_), ids));
    }
    // Rows of the concatenation are [goal, states..., actions...]; reorder to token order.
    Forward f;
    std::vector<Eigen::Index> order;
    Eigen::Index next_state = 1, next_action = 1 + static_cast<Eigen::Index>(seq.state_count());
    for (Eigen::Index i = 0; i < T; ++i) {
      switch (seq.kinds[static_cast<std::size_t>(i)]) {
        case TokenKind::Goal: order.push_back(0); break;
        case TokenKind::State: order.push_back(next_state++); f.state_rows.push_back(i); break;
        case TokenKind::Action: order.push_back(next_action++); f.action_rows.push_back(i); break;
      }
    }
    std::vector<Eigen::Index> index_ids(static_cast<std::size_t>(T));
    for (Eigen::Index i = 0; i < T; ++i) index_ids[static_cast<std::size_t>(i)] = i;
    auto x = add(gather_rows(concat_rows(parts), order), embedding(tape.parameter(store_, index_table_), index_ids));

    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> causal(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      for (Eigen::Index j = 0; j < T; ++j) causal(i, j) = j > i ? 1 : 0;
    }
    const Eigen::Index dh = d / config_.heads;
    const auto inv_sqrt = Scalar(1.0 / std::sqrt(double(dh)));
    for (const auto& b : blocks_) {
      auto qkv = b.qkv(tape, store_, b.norm1(tape, store_, x));
      std::vector<Var<Scalar>> heads;
      for (int h = 0; h < config_.heads; ++h) {
        auto q = slice_cols(qkv, h * dh, dh);
        auto k = slice_cols(qkv, d + h * dh, dh);
        auto v = slice_cols(qkv, 2 * d + h * dh, dh);
        auto scores = masked_fill(scale(matmul(q, transpose(k)), inv_sqrt), causal, Scalar(-1e9));
        heads.push_back(matmul(softmax_rows(scores), v));
      }
      x = add(x, b.out(tape, store_, heads.size() == 1 ? heads.front() : concat_cols(heads)));
      x = add(x, b.fc2(tape, store_, gelu(b.fc1(tape, store_, b.norm2(tape, store_, x)))));
    }
    f.hidden = final_norm_(tape, store_, x);
    f.action_logits = action_head_(tape, store_, gather_rows(f.hidden, f.state_rows));
    if (!f.action_rows.empty()) f.state_predictions = state_head_(tape, store_, gather_rows(f.hidden, f.action_rows));
    return f;
  }

  /// Forward pass without gradient recording.
  DmOutput<Scalar> infer(const TokenSequence& seq) {
    Tape<Scalar> tape(false);
    auto f = forward(tape, seq);
    DmOutput<Scalar> out;
    out.hidden = f.hidden.value();
    out.action_logits = f.action_logits.value();
    if (!f.action_rows.empty()) out.state_predictions = f.state_predictions.value();
    out.state_rows = std::move(f.state_rows);
    out.action_rows = std::move(f.action_rows);
    return out;
  }

  const DmConfig& config() const { return config_; }
  const Dims& dims() const { return dims_; }
  ParameterStore<Scalar>& parameters() { return store_; }
  const ParameterStore<Scalar>& parameters() const { return store_; }

  /// Parameters whose names start with the given prefix (e.g. "state_head").
  std::vector<const Parameter<Scalar>*> parameters_named(const std::string& prefix) const {
    std::vector<const Parameter<Scalar>*> out;
    for (const auto& p : store_) {
      if (p.name.rfind(prefix, 0) == 0) out.push_back(&p);
    }
    return out;
  }

  Checkpoint<Scalar> checkpoint() const {
    Checkpoint<Scalar> c{store_, config_.to_record()};
    c.hyper["embed_dim"] = std::to_string(dims_.embed_dim);
    c.hyper["grid_rows"] = std::to_string(dims_.grid.rows);
    c.hyper["grid_cols"] = std::to_string(dims_.grid.cols);
    c.hyper["grid_budget"] = std::to_string(dims_.grid.budget);
    c.hyper["precision"] = sizeof(Scalar) == 4 ? "float32" : "float64";
    c.hyper["kind"] = "dynamics_model";
    return c;
  }

  static DynamicsModel from_checkpoint(Checkpoint<Scalar> c) {
    auto cfg = DmConfig::from_record(c.hyper);
    if (c.hyper.count("kind") && c.hyper.at("kind") != "dynamics_model") {
      throw FormatError("checkpoint is not a dynamics model (kind=" + c.hyper.at("kind") + ")");
    }
    Dims dims;
    try {
      dims.embed_dim = std::stoi(c.hyper.at("embed_dim"));
      dims.grid.rows = std::stoi(c.hyper.at("grid_rows"));
      dims.grid.cols = std::stoi(c.hyper.at("grid_cols"));
      dims.grid.budget = std::stoi(c.hyper.at("grid_budget"));
    } catch (const std::exception& e) {
      throw FormatError(std::string("dynamics model hyperparameters: ") + e.what());
    }
    return DynamicsModel(cfg, dims, std::move(c.params));
  }

 private:
  struct Block {
    nn::LayerNorm<Scalar> norm1, norm2;
    nn::Linear<Scalar> qkv, out, fc1, fc2;
  };

  DmConfig config_;
  Dims dims_;
  ParameterStore<Scalar> store_;
  nn::Linear<Scalar> goal_proj_, state_proj_;
  typename ParameterStore<Scalar>::Handle offset_table_ = 0, action_table_ = 0, index_table_ = 0;
  std::vector<Block> blocks_;
  nn::LayerNorm<Scalar> final_norm_;
  nn::Linear<Scalar> action_head_, state_head_;
};

}  // namespace geox::dm
