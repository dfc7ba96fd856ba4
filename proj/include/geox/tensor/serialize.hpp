#pragma once

#include <filesystem>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "geox/io.hpp"
#include "geox/tensor/tensor.hpp"

namespace geox {

// Named-tensor container:
//   "GEOX1" | u32 count | per tensor:
//     u32 name length | UTF-8 name | u32 rank | u64 extents[rank] |
//     u8 value width (4 or 8) | little-endian IEEE-754 values
inline constexpr std::string_view kTensorMagic = "GEOX1";

template <typename Scalar>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Scalar>>>;

template <typename Scalar>
void write_tensors(ByteWriter& out, const NamedTensors<Scalar>& tensors) {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  out.text(kTensorMagic);
  out.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    out.u32(static_cast<std::uint32_t>(name.size()));
    out.text(name);
    out.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) out.u64(e);
    out.u8(sizeof(Scalar));
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if constexpr (std::is_same_v<Scalar, float>) {
        out.f32(t.data()[i]);
      } else {
        out.f64(t.data()[i]);
      }
    }
  }
}

/// Reads a container, converting stored values to Scalar.
template <typename Scalar>
NamedTensors<Scalar> read_tensors(ByteReader& in) {
  if (in.text(kTensorMagic.size(), "tensor header") != kTensorMagic) {
    throw FormatError("tensor header: bad magic, expected GEOX1");
  }
  const auto count = in.u32("tensor header");
  NamedTensors<Scalar> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string section = "tensor " + std::to_string(k);
    const auto name_len = in.u32(section);
    std::string name = in.text(name_len, section);
    const auto rank = in.u32(section);
    if (rank > 16) throw FormatError(section + ": implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u64(section));
    const auto width = in.u8(section);
    if (width != 4 && width != 8) throw FormatError(section + ": unsupported value width " + std::to_string(width));
    const auto n = shape_numel(shape);
    if (n > in.remaining() / width) throw FormatError("truncated input in section '" + section + "'");
    Tensor<Scalar> t(shape);
    for (std::size_t i = 0; i < n; ++i) {
      t.data()[i] = width == 4 ? static_cast<Scalar>(in.f32(section)) : static_cast<Scalar>(in.f64(section));
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

template <typename Scalar>
NamedTensors<Scalar> store_tensors(const ParameterStore<Scalar>& store) {
  NamedTensors<Scalar> out;
  for (const auto& p : store) out.emplace_back(p.name, p.value);
  return out;
}

template <typename Scalar>
ParameterStore<Scalar> tensors_store(NamedTensors<Scalar> tensors) {
  ParameterStore<Scalar> store;
  for (auto& [name, t] : tensors) store.add(name, std::move(t));
  return store;
}

/// Parameters plus the hyperparameter record that produced them.
template <typename Scalar>
struct Checkpoint {
  ParameterStore<Scalar> params;
  KeyValues hyper;
};

inline std::filesystem::path hyper_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".hparams");
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<Scalar>& ckpt) {
  ByteWriter w;
  write_tensors(w, store_tensors(ckpt.params));
  write_file(path, w.buffer());
  write_text_file(hyper_sidecar(path), format_key_values(ckpt.hyper));
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes);
  Checkpoint<Scalar> ckpt;
  ckpt.params = tensors_store(read_tensors<Scalar>(r));
  if (!r.at_end()) throw FormatError("checkpoint '" + path.string() + "': trailing bytes after tensors");
  ckpt.hyper = parse_key_values(read_text_file(hyper_sidecar(path)), "checkpoint hyperparameters");
  return ckpt;
}

}  // namespace geox
