#include "geox/dm/model.hpp"

#include <sstream>

namespace geox::dm {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void DmConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw std::invalid_argument("dm config: d_model must be a positive multiple of heads");
  }
  if (layers < 1) throw std::invalid_argument("dm config: layers must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("dm config: max_steps must be >= 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("dm config: alpha must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("dm config: learning rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("dm config: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("dm config: batch size must be >= 1");
}

KeyValues DmConfig::to_record() const {
  return {{"d_model", std::to_string(d_model)},  {"layers", std::to_string(layers)},
          {"heads", std::to_string(heads)},      {"max_steps", std::to_string(max_steps)},
          {"alpha", fmt(alpha)},                 {"learning_rate", fmt(learning_rate)},
          {"epochs", std::to_string(epochs)},    {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)}};
}

DmConfig DmConfig::from_record(const KeyValues& kv) {
  auto get = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(std::string("dm hyperparameters: missing '") + k + "'");
    return it->second;
  };
  DmConfig c;
  try {
    c.d_model = std::stoi(get("d_model"));
    c.layers = std::stoi(get("layers"));
    c.heads = std::stoi(get("heads"));
    c.max_steps = std::stoi(get("max_steps"));
    c.alpha = std::stod(get("alpha"));
    c.learning_rate = std::stod(get("learning_rate"));
    c.epochs = std::stoi(get("epochs"));
    c.batch_size = std::stoi(get("batch_size"));
    c.seed = std::stoull(get("seed"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("dm hyperparameters: malformed value (") + e.what() + ")");
  }
  return c;
}

TokenSequence encode_sequence(const World& world, const Eigen::RowVectorXd& goal, std::span<const Position> positions,
                              std::span<const Action> actions, int context_length) {
  if (positions.empty()) throw std::invalid_argument("encode_sequence: empty prefix");
  if (positions.size() != actions.size() && positions.size() != actions.size() + 1) {
    throw std::invalid_argument("encode_sequence: " + std::to_string(positions.size()) + " states cannot interleave " +
                                std::to_string(actions.size()) + " actions");
  }
  const std::size_t tokens = 1 + positions.size() + actions.size();
  if (tokens > static_cast<std::size_t>(context_length)) {
    throw std::invalid_argument("encode_sequence: prefix of " + std::to_string(tokens) + " tokens exceeds context " +
                                std::to_string(context_length));
  }
  TokenSequence seq;
  seq.goal = goal;
  seq.states.resize(static_cast<Eigen::Index>(positions.size()), world.spec.embed_dim);
  seq.kinds.push_back(TokenKind::Goal);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!in_bounds(positions[i], world.grid())) throw std::invalid_argument("encode_sequence: position off grid");
    seq.states.row(static_cast<Eigen::Index>(i)) = world.patch(positions[i]);
    seq.offsets.push_back(positions[i]);  // offsets are measured from (0,0), the top-left cell
    seq.kinds.push_back(TokenKind::State);
    if (i < actions.size()) {
      seq.actions.push_back(actions[i]);
      seq.kinds.push_back(TokenKind::Action);
    }
  }
  return seq;
}

TokenSequence encode_sequence(const Trajectory& traj, const World& world, int context_length) {
  return encode_sequence(world, goal_embedding(world, traj.goal, traj.goal_modality), traj.positions, traj.actions,
                         context_length);
}

}  // namespace geox::dm
