#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "geox/grid.hpp"

namespace geox {

enum class Modality : std::uint8_t { Aerial = 0, Ground = 1, Text = 2 };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct WorldSpec {
  GridSpec grid;
  int embed_dim = 32;
  int terrain_classes = 4;
  double class_noise = 0.1;
  double ground_noise = 0.1;
  double text_noise = 0.2;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on d < 2, K < 2, K > 255 or negative noise.
  void validate() const;
  double modality_noise(Modality m) const;
  bool operator==(const WorldSpec&) const = default;
};

/// Synthetic search area: one unit-norm embedding per patch (row-major cell
/// order) plus the terrain class of each patch.
struct World {
  WorldSpec spec;
  Eigen::MatrixXd embeddings;            // cells x embed_dim
  std::vector<std::uint8_t> class_map;   // cells

  const GridSpec& grid() const { return spec.grid; }
  Eigen::RowVectorXd patch(Position p) const { return embeddings.row(cell_index(p, spec.grid)); }
  int terrain(Position p) const { return class_map[static_cast<std::size_t>(cell_index(p, spec.grid))]; }
  bool operator==(const World&) const = default;
};

struct GoalSpec {
  Position position;
  Modality modality = Modality::Aerial;
  Eigen::RowVectorXd embedding;
};

World generate_world(const WorldSpec& spec);

/// World built from an explicit class map and unit-norm class prototypes
/// (rows), with per-patch noise drawn from spec.seed. Used for constructed
/// scenes such as a single off-class patch.
World world_from_classes(const WorldSpec& spec, const std::vector<std::uint8_t>& class_map,
                         const Eigen::MatrixXd& prototypes);

/// Unit-norm prototypes drawn from an isotropic Gaussian.
Eigen::MatrixXd draw_prototypes(int classes, int dim, Rng& rng);

/// Goal representation in the requested modality. Aerial returns the patch
/// embedding itself; ground and text add modality noise seeded by
/// (world seed, position, modality).
Eigen::RowVectorXd goal_embedding(const World& world, Position position, Modality modality);
GoalSpec make_goal(const World& world, Position position, Modality modality);

// "GEOW1" | u32 length | WorldSpec as key=value text | class map bytes |
// named-tensor container holding "embeddings"
std::vector<std::uint8_t> encode_world(const World& world);
World decode_world(std::span<const std::uint8_t> bytes);
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

}  // namespace geox
