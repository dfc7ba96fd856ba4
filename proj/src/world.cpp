#include "geox/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "geox/io.hpp"
#include "geox/tensor/serialize.hpp"

namespace geox {

namespace {

constexpr std::string_view kWorldMagic = "GEOW";
constexpr char kWorldVersion = '1';

Eigen::RowVectorXd gaussian_row(int dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::RowVectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v;
}

Eigen::RowVectorXd normalized(Eigen::RowVectorXd v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) throw std::runtime_error("normalize: zero vector");
  return v / norm;
}

// Each class draws an i.i.d. Gaussian field which is box-filtered twice; a
// cell takes the class whose smoothed field is largest there.
std::vector<std::uint8_t> smoothed_class_field(const GridSpec& grid, int classes, Rng& rng) {
  const int n = grid.cells();
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::ArrayXd> fields;
  for (int k = 0; k < classes; ++k) {
    Eigen::ArrayXd f(n);
    for (int i = 0; i < n; ++i) f(i) = g(rng);
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::ArrayXd s(n);
      for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
          double acc = 0.0;
          int count = 0;
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              Position q{r + dr, c + dc};
              if (!in_bounds(q, grid)) continue;
              acc += f(cell_index(q, grid));
              ++count;
            }
          }
          s(r * grid.cols + c) = acc / count;
        }
      }
      f = s;
    }
    fields.push_back(f);
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int k = 1; k < classes; ++k) {
      if (fields[static_cast<std::size_t>(k)](i) > fields[static_cast<std::size_t>(best)](i)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

KeyValues spec_record(const WorldSpec& s) {
  return {{"rows", std::to_string(s.grid.rows)},
          {"cols", std::to_string(s.grid.cols)},
          {"budget", std::to_string(s.grid.budget)},
          {"embed_dim", std::to_string(s.embed_dim)},
          {"terrain_classes", std::to_string(s.terrain_classes)},
          {"class_noise", format_double(s.class_noise)},
          {"ground_noise", format_double(s.ground_noise)},
          {"text_noise", format_double(s.text_noise)},
          {"seed", std::to_string(s.seed)}};
}

WorldSpec spec_from_record(const KeyValues& kv) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("world spec: missing key '") + key + "'");
    return it->second;
  };
  try {
    WorldSpec s;
    s.grid.rows = std::stoi(get("rows"));
    s.grid.cols = std::stoi(get("cols"));
    s.grid.budget = std::stoi(get("budget"));
    s.embed_dim = std::stoi(get("embed_dim"));
    s.terrain_classes = std::stoi(get("terrain_classes"));
    s.class_noise = std::stod(get("class_noise"));
    s.ground_noise = std::stod(get("ground_noise"));
    s.text_noise = std::stod(get("text_noise"));
    s.seed = std::stoull(get("seed"));
    return s;
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const FormatError*>(&e)) throw;
    throw FormatError(std::string("world spec: malformed value (") + e.what() + ")");
  }
}

}  // namespace

const char* to_string(Modality m) {
  switch (m) {
    case Modality::Aerial: return "aerial";
    case Modality::Ground: return "ground";
    case Modality::Text: return "text";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  if (s == "aerial") return Modality::Aerial;
  if (s == "ground") return Modality::Ground;
  if (s == "text") return Modality::Text;
  throw std::invalid_argument("unknown modality '" + s + "' (aerial|ground|text)");
}

void WorldSpec::validate() const {
  grid.validate();
  if (embed_dim < 2) throw std::invalid_argument("world: embed_dim must be >= 2, got " + std::to_string(embed_dim));
  if (terrain_classes < 2 || terrain_classes > 255) {
    throw std::invalid_argument("world: terrain_classes must be in [2,255], got " + std::to_string(terrain_classes));
  }
  if (!(class_noise >= 0.0) || !(ground_noise >= 0.0) || !(text_noise >= 0.0)) {
    throw std::invalid_argument("world: noise levels must be nonnegative");
  }
}

double WorldSpec::modality_noise(Modality m) const {
  switch (m) {
    case Modality::Aerial: return 0.0;
    case Modality::Ground: return ground_noise;
    case Modality::Text: return text_noise;
  }
  return 0.0;
}

Eigen::MatrixXd draw_prototypes(int classes, int dim, Rng& rng) {
  Eigen::MatrixXd protos(classes, dim);
  for (int k = 0; k < classes; ++k) protos.row(k) = normalized(gaussian_row(dim, rng));
  return protos;
}

World world_from_classes(const WorldSpec& spec, const std::vector<std::uint8_t>& class_map,
                         const Eigen::MatrixXd& prototypes) {
  spec.validate();
  if (static_cast<int>(class_map.size()) != spec.grid.cells()) throw std::invalid_argument("world: class map size");
  if (prototypes.cols() != spec.embed_dim) throw std::invalid_argument("world: prototype dimension");
  Rng rng(derive_seed(spec.seed, {0x70a7c4ULL}));
  World w;
  w.spec = spec;
  w.class_map = class_map;
  w.embeddings.resize(spec.grid.cells(), spec.embed_dim);
  for (int i = 0; i < spec.grid.cells(); ++i) {
    const int k = class_map[static_cast<std::size_t>(i)];
    if (k >= prototypes.rows()) throw std::invalid_argument("world: class id without prototype");
    Eigen::RowVectorXd v = prototypes.row(k);
    if (spec.class_noise > 0.0) {
      v += spec.class_noise * gaussian_row(spec.embed_dim, rng);
      v = normalized(v);
    }
    w.embeddings.row(i) = v;
  }
  return w;
}

World generate_world(const WorldSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Eigen::MatrixXd protos = draw_prototypes(spec.terrain_classes, spec.embed_dim, rng);
  auto classes = smoothed_class_field(spec.grid, spec.terrain_classes, rng);
  return world_from_classes(spec, classes, protos);
}

Eigen::RowVectorXd goal_embedding(const World& world, Position position, Modality modality) {
  if (!in_bounds(position, world.grid())) throw ContractViolation("goal_embedding: position out of bounds");
  Eigen::RowVectorXd base = world.patch(position);
  const double sigma = world.spec.modality_noise(modality);
  if (modality == Modality::Aerial || sigma == 0.0) return base;
  Rng rng(derive_seed(world.spec.seed, {static_cast<std::uint64_t>(position.row),
                                        static_cast<std::uint64_t>(position.col),
                                        static_cast<std::uint64_t>(modality)}));
  return normalized(base + sigma * gaussian_row(world.spec.embed_dim, rng));
}

GoalSpec make_goal(const World& world, Position position, Modality modality) {
  return GoalSpec{position, modality, goal_embedding(world, position, modality)};
}

std::vector<std::uint8_t> encode_world(const World& world) {
  ByteWriter w;
  w.text(kWorldMagic);
  w.u8(static_cast<std::uint8_t>(kWorldVersion));
  const auto text = format_key_values(spec_record(world.spec));
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.text(text);
  w.bytes(world.class_map);
  NamedTensors<double> t;
  const Shape shape{static_cast<std::size_t>(world.embeddings.rows()), static_cast<std::size_t>(world.embeddings.cols())};
  t.emplace_back("embeddings", Tensor<double>(shape, world.embeddings));
  write_tensors(w, t);
  return w.take();
}

World decode_world(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(kWorldMagic.size(), "world header") != kWorldMagic) throw FormatError("world header: bad magic");
  const char version = static_cast<char>(r.u8("world header"));
  if (version != kWorldVersion) {
    throw FormatError(std::string("world header: unsupported version GEOW") + version);
  }
  const auto len = r.u32("world spec");
  World w;
  w.spec = spec_from_record(parse_key_values(r.text(len, "world spec"), "world spec"));
  try {
    w.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("world spec: ") + e.what());
  }
  auto classes = r.bytes(static_cast<std::size_t>(w.spec.grid.cells()), "class map");
  w.class_map.assign(classes.begin(), classes.end());
  for (auto k : w.class_map) {
    if (k >= w.spec.terrain_classes) throw FormatError("class map: class id out of range");
  }
  auto tensors = read_tensors<double>(r);
  if (tensors.size() != 1 || tensors[0].first != "embeddings") throw FormatError("embeddings: expected one tensor");
  const auto& t = tensors[0].second;
  if (t.shape() != Shape{static_cast<std::size_t>(w.spec.grid.cells()), static_cast<std::size_t>(w.spec.embed_dim)}) {
    throw FormatError("embeddings: shape " + shape_string(t.shape()) + " does not match world spec");
  }
  w.embeddings = t.matrix();
  if (!r.at_end()) throw FormatError("world: trailing bytes");
  return w;
}

void save_world(const World& world, const std::filesystem::path& path) { write_file(path, encode_world(world)); }

World load_world(const std::filesystem::path& path) { return decode_world(read_file(path)); }

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine: zero-norm vector");
  return a.dot(b) / (na * nb);
}

}  // namespace geox
