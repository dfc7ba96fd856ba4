#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "geox/grid.hpp"
#include "geox/world.hpp"

namespace geox {

struct WorldRef {
  std::uint32_t id = 0;
  std::uint64_t hash = 0;
  bool operator==(const WorldRef&) const = default;
};

/// Worlds with stable ids and content hashes (hash of the encoded world).
struct WorldSet {
  std::vector<World> worlds;
  std::vector<WorldRef> refs;

  std::size_t size() const { return worlds.size(); }
  const World& by_id(std::uint32_t id) const;
};

WorldSet make_world_set(std::vector<World> worlds, std::uint32_t first_id = 0);

/// Random exploratory walk with per-step optimal-action labels.
/// positions has N+1 entries; actions and labels have N.
struct Trajectory {
  std::uint32_t world_id = 0;
  Position goal;
  Modality goal_modality = Modality::Aerial;
  std::vector<Position> positions;
  std::vector<Action> actions;
  std::vector<ActionSet> labels;

  std::size_t steps() const { return actions.size(); }
  bool operator==(const Trajectory&) const = default;
};

/// Valid actions that strictly reduce the Manhattan distance to the goal.
/// Throws ContractViolation when pos == goal.
ActionSet optimal_action_labels(Position pos, Position goal, const GridSpec& spec);

/// Uniform valid-action walk of `steps` moves. The walk may cross the goal;
/// steps taken from the goal cell carry an empty label.
Trajectory sample_random_trajectory(const GridSpec& spec, Position start, Position goal, int steps, Rng& rng);

struct Dataset {
  std::vector<WorldRef> worlds;
  std::vector<Trajectory> trajectories;
  bool operator==(const Dataset&) const = default;
};

struct DatasetConfig {
  int pairs_per_world = 20;
  int steps = 10;
  std::vector<int> distances{4, 5, 6, 7, 8};
  std::uint64_t seed = 0;
};

/// Pair k of a world uses distance distances[k % |distances|]; each
/// trajectory draws from an rng derived from (seed, world id, k), so the
/// result does not depend on evaluation order.
Dataset build_dataset(const WorldSet& worlds, const DatasetConfig& config);

// "GEOT1" | u32 world count | (u32 id, u64 hash)* | u32 trajectory count |
// per trajectory: u32 world id | u8 goal row | u8 goal col | u8 modality |
// u32 N | (u8 row, u8 col) x (N+1) | u8 action x N | labels as 4-bit masks,
// two per byte, low nibble first
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace geox
