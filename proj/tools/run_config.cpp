#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace geox::cli {

const std::vector<KeySpec>& key_registry() {
  static const std::vector<KeySpec> keys{
      {"seed", "0", "master seed"},
      {"out", "run", "output directory"},
      {"rows", "5", "grid rows"},
      {"cols", "5", "grid columns"},
      {"budget", "10", "search budget B (actions per episode)"},
      {"count", "8", "number of worlds to generate"},
      {"first-id", "0", "id of the first generated world"},
      {"embed-dim", "32", "embedding dimension d (>= 2)"},
      {"classes", "4", "terrain classes K (>= 2)"},
      {"class-noise", "0.1", "per-patch noise around the class prototype"},
      {"ground-noise", "0.1", "ground-modality goal noise"},
      {"text-noise", "0.2", "text-modality goal noise"},
      {"worlds", "", "world directory (holds worlds.manifest)"},
      {"dataset", "", "trajectory dataset file"},
      {"dm", "", "dynamics-model checkpoint"},
      {"heads", "", "actor-critic checkpoint"},
      {"pairs", "20", "start/goal pairs per world in the dataset"},
      {"steps", "10", "actions per trajectory N (also the model's context)"},
      {"distances", "4,5,6,7,8", "start-to-goal distances C"},
      {"d-model", "64", "model width"},
      {"layers", "2", "transformer blocks"},
      {"attn-heads", "2", "attention heads per block"},
      {"alpha", "1", "state-loss weight"},
      {"dm-lr", "0.0001", "dynamics-model learning rate"},
      {"dm-epochs", "30", "dynamics-model epochs"},
      {"batch-size", "1", "trajectories per dynamics-model update"},
      {"beta", "0.25", "intrinsic-reward weight"},
      {"intrinsic", "mse", "intrinsic reward kind (mse|cos)"},
      {"norm-scope", "batch", "intrinsic normalization population (batch|episode|running)"},
      {"gamma", "0.99", "discount"},
      {"clip", "0.2", "PPO clip ratio epsilon"},
      {"critic-weight", "0.5", "critic loss weight omega"},
      {"entropy-weight", "0.01", "entropy weight rho"},
      {"strict-entropy-sign", "false", "add +rho*H to the minimized loss instead of -rho*H"},
      {"sync-period", "4", "optimization epochs per rollout batch before the old policy is refreshed"},
      {"lr", "0.0001", "actor-critic learning rate"},
      {"epochs", "300", "rollout rounds"},
      {"episodes-per-round", "16", "episodes collected per rollout round"},
      {"minibatch", "32", "steps per PPO minibatch"},
      {"hidden", "64", "actor/critic hidden width"},
      {"probe-every", "10", "rounds between probe evaluations"},
      {"probe-episodes", "40", "episodes in the probe set"},
      {"trace", "false", "write per-step reward traces"},
      {"modality", "aerial", "goal modality (aerial|ground|text)"},
      {"policy", "ce", "policy to evaluate (random|oracle|dm|ce)"},
      {"mode", "argmax", "action selection for the ce policy (argmax|stochastic)"},
      {"eval-pairs", "5", "start/goal pairs per world per distance"},
      {"trials", "1", "runs of each pair"},
      {"render-format", "ascii", "render format (ascii|svg)"},
      {"render-limit", "20", "maximum number of renders"},
      {"render-mode", "stochastic", "action selection for ce renders (argmax|stochastic)"},
      {"render-trials", "4", "runs of each rendered pair"},
  };
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : key_registry()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

namespace {

const std::map<std::string, std::vector<std::string>>& commands() {
  static const std::vector<std::string> grid{"rows", "cols", "budget"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out{"seed", "out"};
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  static const std::vector<std::string> reward{"beta", "intrinsic", "norm-scope"};
  static const std::vector<std::string> ppo{"gamma",  "clip",       "critic-weight",      "entropy-weight",
                                            "strict-entropy-sign", "sync-period", "lr", "epochs",
                                            "episodes-per-round",  "minibatch",   "hidden", "probe-every",
                                            "probe-episodes",      "trace"};
  static const std::vector<std::string> eval{"worlds", "policy", "dm", "heads", "mode", "modality", "distances",
                                             "eval-pairs", "trials"};
  static const std::map<std::string, std::vector<std::string>> m{
      {"gen-worlds", join({grid,
                           {"count", "first-id", "embed-dim", "classes", "class-noise", "ground-noise",
                            "text-noise"}})},
      {"build-dataset", join({{"worlds", "pairs", "steps", "distances"}})},
      {"train-dm", join({{"worlds", "dataset", "steps", "d-model", "layers", "attn-heads", "alpha", "dm-lr",
                          "dm-epochs", "batch-size"}})},
      {"train-ce", join({{"worlds", "dm", "modality", "distances"}, reward, ppo})},
      {"eval", join({eval})},
      {"render", join({eval, {"render-format", "render-limit", "render-mode", "render-trials"}})},
  };
  return m;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expected);
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-worlds", "build-dataset", "train-dm", "train-ce", "eval", "render"};
  return names;
}

const std::vector<std::string>& command_keys(const std::string& command) {
  auto it = commands().find(command);
  if (it == commands().end()) throw ConfigError("unknown command '" + command + "'");
  return it->second;
}

RunConfig::RunConfig() {
  for (const auto& k : key_registry()) values_[k.key] = k.default_value;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  try {
    kv = parse_key_values(text, origin);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [k, v] : kv) {
    if (!find_key(k)) throw ConfigError(origin + ": unknown key '" + k + "'");
    values_[k] = v;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

int RunConfig::integer(const std::string& key) const {
  const auto& s = str(key);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) bad_value(key, s, "an integer");
  return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const auto& s = str(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) bad_value(key, s, "an unsigned integer");
  return v;
}

double RunConfig::real(const std::string& key) const {
  const auto& s = str(key);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) bad_value(key, s, "a number");
  return v;
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& s = str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "a boolean (true|false|1|0)");
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  const auto& s = str(key);
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || p != item.data() + item.size()) {
      bad_value(key, s, "a comma-separated integer list");
    }
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, s, "a nonempty list");
  return out;
}

std::string RunConfig::resolved(const std::vector<std::string>& keys) const {
  std::string out;
  for (const auto& k : keys) out += k + " = " + str(k) + "\n";
  return out;
}

GridSpec grid_spec(const RunConfig& c) {
  GridSpec g{c.integer("rows"), c.integer("cols"), c.integer("budget")};
  g.validate();
  return g;
}

WorldSpec world_spec(const RunConfig& c) {
  WorldSpec s;
  s.grid = grid_spec(c);
  s.embed_dim = c.integer("embed-dim");
  s.terrain_classes = c.integer("classes");
  s.class_noise = c.real("class-noise");
  s.ground_noise = c.real("ground-noise");
  s.text_noise = c.real("text-noise");
  s.seed = c.u64("seed");
  s.validate();
  return s;
}

DatasetConfig dataset_config(const RunConfig& c) {
  DatasetConfig d;
  d.pairs_per_world = c.integer("pairs");
  d.steps = c.integer("steps");
  d.distances = c.int_list("distances");
  d.seed = c.u64("seed");
  if (d.pairs_per_world < 1 || d.steps < 1) throw ConfigError("pairs and steps must be >= 1");
  return d;
}

dm::DmConfig dm_config(const RunConfig& c) {
  dm::DmConfig d;
  d.d_model = c.integer("d-model");
  d.layers = c.integer("layers");
  d.heads = c.integer("attn-heads");
  d.max_steps = c.integer("steps");
  d.alpha = c.real("alpha");
  d.learning_rate = c.real("dm-lr");
  d.epochs = c.integer("dm-epochs");
  d.batch_size = c.integer("batch-size");
  d.seed = c.u64("seed");
  d.validate();
  return d;
}

ppo::CeConfig ce_config(const RunConfig& c) {
  ppo::CeConfig ce;
  auto& p = ce.ppo;
  p.gamma = c.real("gamma");
  p.clip = c.real("clip");
  p.critic_weight = c.real("critic-weight");
  p.entropy_weight = c.real("entropy-weight");
  p.strict_entropy_sign = c.boolean("strict-entropy-sign");
  p.sync_period = c.integer("sync-period");
  p.learning_rate = c.real("lr");
  p.epochs = c.integer("epochs");
  p.episodes_per_round = c.integer("episodes-per-round");
  p.minibatch = c.integer("minibatch");
  p.hidden = c.integer("hidden");
  p.probe_every = c.integer("probe-every");
  p.probe_episodes = c.integer("probe-episodes");
  p.seed = c.u64("seed");
  p.validate();
  ce.reward.beta = c.real("beta");
  if (!(ce.reward.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  ce.reward.kind = intrinsic_kind_from_string(c.str("intrinsic"));
  ce.reward.scope = normalization_scope_from_string(c.str("norm-scope"));
  ce.distances = c.int_list("distances");
  ce.modality = modality_from_string(c.str("modality"));
  ce.trace = c.boolean("trace");
  return ce;
}

EvalConfig eval_config(const RunConfig& c, bool render) {
  EvalConfig e;
  e.distances = c.int_list("distances");
  e.pairs_per_world = c.integer("eval-pairs");
  e.modality = modality_from_string(c.str("modality"));
  e.trials = c.integer(render ? "render-trials" : "trials");
  e.seed = c.u64("seed");
  return e;
}

}  // namespace geox::cli
