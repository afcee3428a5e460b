// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "segobs/io.hpp"
#include "segobs/models.hpp"

namespace segobs {

/// Checkpoint format: magic "OBSCKPT1", u32 entry count, then per entry:
/// u32 name length, UTF-8 name, u32 rank, rank x u32 dims, float32 payload.
/// All integers little-endian.
inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, std::vector<float>*>>& entries,
                            const std::vector<std::pair<std::string, Shape>>& shapes) {
  require(detail::host_is_little_endian(), "checkpoint: big-endian hosts are unsupported");
  require(entries.size() == shapes.size(), "save_checkpoint: entry/shape count mismatch");
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "save_checkpoint: cannot open " + path.string());
  os.write("OBSCKPT1", 8);
  detail::write_u32le(os, static_cast<std::uint32_t>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, vec] = entries[i];
    const auto& shape = shapes[i].second;
    require(shapes[i].first == name, "save_checkpoint: ordering mismatch at " + name);
    require(numel(shape) == vec->size(), "save_checkpoint: shape mismatch for " + name);
    detail::write_u32le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32le(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) detail::write_u32le(os, static_cast<std::uint32_t>(d));
    detail::write_f32le(os, vec->data(), vec->size());
  }
  require(static_cast<bool>(os), "save_checkpoint: write failed for " + path.string());
}

struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  require(detail::host_is_little_endian(), "checkpoint: big-endian hosts are unsupported");
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "load_checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  require(static_cast<bool>(is) && std::memcmp(magic, "OBSCKPT1", 8) == 0,
          "load_checkpoint: bad magic in " + path.string());
  const std::uint32_t count = detail::read_u32le(is, path.string());
  std::map<std::string, CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32le(is, path.string());
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(static_cast<bool>(is), "load_checkpoint: truncated name in " + path.string());
    const std::uint32_t rank = detail::read_u32le(is, path.string());
    Shape shape(rank);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = detail::read_u32le(is, path.string());
      total *= shape[d];
    }
    std::vector<float> data(total);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * 4));
    require(static_cast<bool>(is), "load_checkpoint: truncated payload for " + name);
    out.emplace(std::move(name), CheckpointEntry{std::move(shape), std::move(data)});
  }
  return out;
}

template <typename S>
void save_model(const std::filesystem::path& path, SegModel<S>& model)
  requires std::same_as<S, float>
{
  save_checkpoint(path, model.named_state(), model.state_shapes());
}

template <typename S>
void load_model(const std::filesystem::path& path, SegModel<S>& model)
  requires std::same_as<S, float>
{
  auto entries = load_checkpoint(path);
  auto state = model.named_state();
  for (auto& [name, vec] : state) {
    auto it = entries.find(name);
    require(it != entries.end(), "load_model: missing entry " + name + " in " + path.string());
    require(it->second.data.size() == vec->size(), "load_model: size mismatch for " + name);
    *vec = it->second.data;
  }
  require(entries.size() == state.size(), "load_model: checkpoint has extra entries, " + path.string());
}

/// Flat key=value metadata block written next to each checkpoint.
inline void save_model_meta(const std::filesystem::path& path, const ArchConfig& cfg, const std::string& kind) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "save_model_meta: cannot open " + path.string());
  os << "model.kind = " << kind << "\n";
  os << "arch.height = " << cfg.height << "\n";
  os << "arch.width = " << cfg.width << "\n";
  os << "arch.classes = " << cfg.num_classes << "\n";
  os << "arch.widths = ";
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) os << (i ? "," : "") << cfg.widths[i];
  os << "\n";
  os << "arch.dropout_p = " << cfg.dropout_p << "\n";
}

}  // namespace segobs
