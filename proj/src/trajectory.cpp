#include "geox/trajectory.hpp"

#include <future>

#include "geox/io.hpp"

namespace geox {

const World& WorldSet::by_id(std::uint32_t id) const {
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].id == id) return worlds[i];
  }
  throw std::out_of_range("world set: no world with id " + std::to_string(id));
}

WorldSet make_world_set(std::vector<World> worlds, std::uint32_t first_id) {
  WorldSet set;
  for (std::size_t i = 0; i < worlds.size(); ++i) {
    set.refs.push_back(WorldRef{first_id + static_cast<std::uint32_t>(i), content_hash64(encode_world(worlds[i]))});
  }
  set.worlds = std::move(worlds);
  return set;
}

ActionSet optimal_action_labels(Position pos, Position goal, const GridSpec& spec) {
  if (pos == goal) throw ContractViolation("optimal_action_labels: position equals goal");
  ActionSet out;
  const int d = manhattan(pos, goal);
  for (auto a : kAllActions) {
    auto q = moved(pos, a);
    if (in_bounds(q, spec) && manhattan(q, goal) < d) out.insert(a);
  }
  return out;
}

Trajectory sample_random_trajectory(const GridSpec& spec, Position start, Position goal, int steps, Rng& rng) {
  if (start == goal) throw ContractViolation("sample_random_trajectory: start equals goal");
  if (steps < 1) throw ContractViolation("sample_random_trajectory: need at least one step");
  Trajectory t;
  t.goal = goal;
  t.positions.push_back(start);
  Position p = start;
  for (int i = 0; i < steps; ++i) {
    t.labels.push_back(p == goal ? ActionSet{} : optimal_action_labels(p, goal, spec));
    auto valid = valid_actions(p, spec).actions();
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    const Action a = valid[pick(rng)];
    t.actions.push_back(a);
    p = moved(p, a);
    t.positions.push_back(p);
  }
  return t;
}

Dataset build_dataset(const WorldSet& worlds, const DatasetConfig& config) {
  if (worlds.size() == 0) throw std::invalid_argument("build_dataset: no worlds");
  if (config.distances.empty()) throw std::invalid_argument("build_dataset: empty distance set");
  auto per_world = [&](std::size_t w) {
    const auto& world = worlds.worlds[w];
    const auto id = worlds.refs[w].id;
    std::vector<Trajectory> out;
    for (int k = 0; k < config.pairs_per_world; ++k) {
      Rng rng(derive_seed(config.seed, {id, static_cast<std::uint64_t>(k)}));
      const int c = config.distances[static_cast<std::size_t>(k) % config.distances.size()];
      auto [start, goal] = sample_pair_at_distance(world.grid(), c, rng);
      Trajectory t = sample_random_trajectory(world.grid(), start, goal, config.steps, rng);
      t.world_id = id;
      t.goal_modality = Modality::Aerial;
      out.push_back(std::move(t));
    }
    return out;
  };
  std::vector<std::future<std::vector<Trajectory>>> jobs;
  for (std::size_t w = 0; w < worlds.size(); ++w) jobs.push_back(std::async(std::launch::async, per_world, w));
  Dataset ds;
  ds.worlds = worlds.refs;
  for (auto& j : jobs) {
    auto part = j.get();
    ds.trajectories.insert(ds.trajectories.end(), std::make_move_iterator(part.begin()),
                           std::make_move_iterator(part.end()));
  }
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.text("GEOT1");
  w.u32(static_cast<std::uint32_t>(dataset.worlds.size()));
  for (const auto& ref : dataset.worlds) {
    w.u32(ref.id);
    w.u64(ref.hash);
  }
  w.u32(static_cast<std::uint32_t>(dataset.trajectories.size()));
  for (const auto& t : dataset.trajectories) {
    w.u32(t.world_id);
    w.u8(static_cast<std::uint8_t>(t.goal.row));
    w.u8(static_cast<std::uint8_t>(t.goal.col));
    w.u8(static_cast<std::uint8_t>(t.goal_modality));
    w.u32(static_cast<std::uint32_t>(t.actions.size()));
    for (auto p : t.positions) {
      w.u8(static_cast<std::uint8_t>(p.row));
      w.u8(static_cast<std::uint8_t>(p.col));
    }
    for (auto a : t.actions) w.u8(static_cast<std::uint8_t>(a));
    for (std::size_t i = 0; i < t.labels.size(); i += 2) {
      std::uint8_t b = t.labels[i].bits();
      if (i + 1 < t.labels.size()) b = static_cast<std::uint8_t>(b | (t.labels[i + 1].bits() << 4));
      w.u8(b);
    }
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.text(5, "dataset header");
  if (magic.substr(0, 4) != "GEOT") throw FormatError("dataset header: bad magic");
  if (magic[4] != '1') throw FormatError("dataset header: unsupported version " + magic);
  Dataset ds;
  const auto nw = r.u32("world references");
  for (std::uint32_t i = 0; i < nw; ++i) {
    WorldRef ref;
    ref.id = r.u32("world references");
    ref.hash = r.u64("world references");
    ds.worlds.push_back(ref);
  }
  const auto nt = r.u32("trajectory count");
  for (std::uint32_t k = 0; k < nt; ++k) {
    const std::string section = "trajectory " + std::to_string(k);
    Trajectory t;
    t.world_id = r.u32(section);
    t.goal.row = r.u8(section);
    t.goal.col = r.u8(section);
    const auto mod = r.u8(section);
    if (mod > 2) throw FormatError(section + ": bad modality");
    t.goal_modality = static_cast<Modality>(mod);
    const auto n = r.u32(section);
    if (n > r.remaining()) throw FormatError("truncated input in section '" + section + "'");
    for (std::uint32_t i = 0; i <= n; ++i) {
      Position p;
      p.row = r.u8(section);
      p.col = r.u8(section);
      t.positions.push_back(p);
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto a = r.u8(section);
      if (a >= kActionCount) throw FormatError(section + ": bad action byte");
      t.actions.push_back(static_cast<Action>(a));
    }
    for (std::uint32_t i = 0; i < n; i += 2) {
      const auto b = r.u8(section);
      t.labels.emplace_back(static_cast<std::uint8_t>(b & 0xF));
      if (i + 1 < n) t.labels.emplace_back(static_cast<std::uint8_t>(b >> 4));
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError("dataset: trailing bytes");
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace geox
