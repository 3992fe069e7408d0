#pragma once

// Versioned binary checkpoints: model configuration header, every named
// parameter/buffer tensor, and (optionally) optimizer moments, so training
// resumes bit-exactly. Byte layout is documented in docs/formats.md;
// multi-byte fields are little-endian.

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vmatt/adam.hpp"
#include "vmatt/model.hpp"

namespace vmatt {

inline constexpr char kCheckpointMagic[4] = {'V', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ModelConfig config;
  int stage = 1;
  std::uint64_t iteration = 0;
  bool has_optimizer = false;
};

namespace detail {

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  if (n > (1u << 20)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("checkpoint: truncated file");
  return s;
}

template <typename T>
void write_tensor_data(std::ostream& os, const Tensor<T>& t) {
  write_pod(os, static_cast<std::uint32_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) write_pod(os, static_cast<std::int32_t>(t.dim(d)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
}

template <typename T>
void read_tensor_into(std::istream& is, Tensor<T>& t, const std::string& name) {
  const auto rank = read_pod<std::uint32_t>(is);
  std::vector<int> dims(rank);
  for (auto& d : dims) d = read_pod<std::int32_t>(is);
  if (Shape(dims) != t.shape())
    throw ShapeError("checkpoint: tensor " + name + " stored as " + Shape(dims).str() +
                     " but the model expects " + t.shape().str());
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
  if (!is) throw IoError("checkpoint: truncated tensor data for " + name);
}

inline void write_config(std::ostream& os, const ModelConfig& c) {
  write_pod(os, static_cast<std::uint32_t>(c.backbone));
  for (int v : c.encoder_channels) write_pod(os, static_cast<std::int32_t>(v));
  write_pod(os, static_cast<std::int32_t>(c.aspp_channels));
  for (int v : c.decoder_channels) write_pod(os, static_cast<std::int32_t>(v));
}

inline ModelConfig read_config(std::istream& is) {
  ModelConfig c;
  c.backbone = static_cast<Backbone>(read_pod<std::uint32_t>(is));
  for (auto& v : c.encoder_channels) v = read_pod<std::int32_t>(is);
  c.aspp_channels = read_pod<std::int32_t>(is);
  for (auto& v : c.decoder_channels) v = read_pod<std::int32_t>(is);
  return c;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model,
                     const AdamOptimizer<T>* opt, int stage, std::uint64_t iteration) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kCheckpointMagic, 4);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, static_cast<std::uint32_t>(sizeof(T)));
  detail::write_config(os, model.config);
  detail::write_pod(os, static_cast<std::uint32_t>(stage));
  detail::write_pod(os, iteration);

  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  model.visit([&](const std::string& name, Tensor<T>& t, ParamKind) {
    tensors.emplace_back(name, t);
  });
  detail::write_pod(os, static_cast<std::uint64_t>(tensors.size()));
  for (auto& [name, t] : tensors) {
    detail::write_string(os, name);
    detail::write_tensor_data(os, t);
  }

  detail::write_pod(os, static_cast<std::uint8_t>(opt ? 1 : 0));
  if (opt) {
    for (double lr : opt->lrs()) detail::write_pod(os, lr);
    detail::write_pod(os, opt->hyper().beta1);
    detail::write_pod(os, opt->hyper().beta2);
    detail::write_pod(os, opt->hyper().eps);
    detail::write_pod(os, static_cast<std::uint64_t>(opt->entries().size()));
    for (const auto& e : opt->entries()) {
      detail::write_string(os, e.name);
      detail::write_pod(os, static_cast<std::uint64_t>(e.steps));
      detail::write_tensor_data(os, e.m);
      detail::write_tensor_data(os, e.v);
    }
  }
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

inline CheckpointMeta read_checkpoint_header(std::istream& is, std::uint32_t scalar_width,
                                             const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: " + path + " is not a checkpoint file");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto width = detail::read_pod<std::uint32_t>(is);
  if (scalar_width != 0 && width != scalar_width)
    throw ValueError("checkpoint: stored scalar width " + std::to_string(width) +
                     " does not match the requested " + std::to_string(scalar_width));
  CheckpointMeta meta;
  meta.config = detail::read_config(is);
  meta.stage = static_cast<int>(detail::read_pod<std::uint32_t>(is));
  meta.iteration = detail::read_pod<std::uint64_t>(is);
  return meta;
}

// Header-only peek (config, stage cursor, whether optimizer state follows).
inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  return read_checkpoint_header(is, 0, path);
}

// Restores parameters (and optimizer moments when `opt` is given) in place.
// The model must already be built with the stored configuration.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, Model<T>& model,
                               AdamOptimizer<T>* opt = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  CheckpointMeta meta = read_checkpoint_header(is, sizeof(T), path);
  const auto& c = meta.config;
  const auto& m = model.config;
  if (c.backbone != m.backbone || c.encoder_channels != m.encoder_channels ||
      c.aspp_channels != m.aspp_channels || c.decoder_channels != m.decoder_channels)
    throw ValueError(
        "checkpoint: stored model configuration does not match the target model");

  std::map<std::string, Tensor<T>> by_name;
  model.visit([&](const std::string& name, Tensor<T>& t, ParamKind) {
    by_name.emplace(name, t);
  });
  const auto count = detail::read_pod<std::uint64_t>(is);
  if (count != by_name.size())
    throw ValueError("checkpoint: stores " + std::to_string(count) + " tensors, model has " +
                     std::to_string(by_name.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = detail::read_string(is);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValueError("checkpoint: unknown tensor " + name);
    detail::read_tensor_into(is, it->second, name);
  }

  meta.has_optimizer = detail::read_pod<std::uint8_t>(is) != 0;
  if (meta.has_optimizer && opt) {
    std::array<double, 3> lrs;
    for (auto& lr : lrs) lr = detail::read_pod<double>(is);
    opt->set_lrs(lrs);
    detail::read_pod<double>(is);  // beta1/beta2/eps are fixed declaratively
    detail::read_pod<double>(is);
    detail::read_pod<double>(is);
    const auto entries = detail::read_pod<std::uint64_t>(is);
    if (entries != opt->entries().size())
      throw ValueError("checkpoint: optimizer entry count mismatch");
    std::map<std::string, typename AdamOptimizer<T>::Entry*> opt_by_name;
    for (auto& e : opt->entries()) opt_by_name.emplace(e.name, &e);
    for (std::uint64_t i = 0; i < entries; ++i) {
      const std::string name = detail::read_string(is);
      auto it = opt_by_name.find(name);
      if (it == opt_by_name.end())
        throw ValueError("checkpoint: unknown optimizer entry " + name);
      it->second->steps = static_cast<std::int64_t>(detail::read_pod<std::uint64_t>(is));
      detail::read_tensor_into(is, it->second->m, name + " (first moment)");
      detail::read_tensor_into(is, it->second->v, name + " (second moment)");
    }
  } else if (opt && !meta.has_optimizer) {
    throw ValueError("checkpoint: " + path + " holds no optimizer state to resume from");
  }
  return meta;
}

}  // namespace vmatt
