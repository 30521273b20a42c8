// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rpt/model/encoders.hpp"
#include "rpt/prompts/prompt_set.hpp"

// Flat versioned checkpoint:
//
//   magic      8 bytes  "RPTCKPT\0"
//   version    u32      (1)
//   branch     u32 length + bytes   ("point", "text" or "prompt")
//   count      u32
//   table      count x { u32 name length, name bytes, u32 rank, rank x u64 dims }
//   payload    float64 values of every tensor, table order, row-major
//
// All integers and floats are little-endian.
namespace rpt {

inline constexpr std::array<char, 8> kCheckpointMagic = {'R', 'P', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string branch;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.tensor;
    throw Error("checkpoint (" + branch + ") has no tensor '" + name + "'");
  }
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  T v{};
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw Error("checkpoint truncated");
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
  const auto n = get_le<std::uint32_t>(is);
  if (n > (1u << 20)) throw Error("checkpoint string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw Error("checkpoint truncated");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_str(os, ck.branch);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::put_str(os, t.name);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) detail::put_le<std::uint64_t>(os, d);
  }
  for (const auto& t : ck.tensors)
    for (double v : t.tensor.data()) detail::put_le<double>(os, v);
  if (!os) throw Error("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw Error("not a checkpoint file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.branch = detail::get_str(is);
  const auto count = detail::get_le<std::uint32_t>(is);
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = detail::get_str(is);
    const auto rank = detail::get_le<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw Error("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::get_le<std::uint64_t>(is));
    table.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : table) {
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = detail::get_le<double>(is);
    ck.tensors.push_back({name, Tensor(shape, std::move(data))});
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return read_checkpoint(is);
}

// ---------------------------------------------------------------------------
// Encoder and prompt checkpoints

namespace detail {

inline Tensor config_tensor(const EncoderConfig& c) {
  return Tensor({9}, {static_cast<double>(c.blocks), static_cast<double>(c.width), static_cast<double>(c.feature_dim),
                      static_cast<double>(c.heads), static_cast<double>(c.mlp_ratio), static_cast<double>(c.patches),
                      static_cast<double>(c.neighbors), static_cast<double>(c.max_text_len), c.init_std});
}

inline EncoderConfig config_from_tensor(const Tensor& t) {
  if (t.size() != 9) throw Error("checkpoint config tensor has " + std::to_string(t.size()) + " entries");
  auto z = [&](std::size_t i) { return static_cast<std::size_t>(t[i]); };
  EncoderConfig c;
  c.blocks = z(0);
  c.width = z(1);
  c.feature_dim = z(2);
  c.heads = z(3);
  c.mlp_ratio = z(4);
  c.patches = z(5);
  c.neighbors = z(6);
  c.max_text_len = z(7);
  c.init_std = t[8];
  c.validate();
  return c;
}

inline void load_into(const Checkpoint& ck, const std::string& prefix, DualEncoder& enc) {
  enc.visit([&](const std::string& name, Tensor& t) {
    if (name.rfind(prefix, 0) != 0) return;
    const Tensor& src = ck.get(name.substr(prefix.size()));
    if (src.shape() != t.shape())
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                       shape_str(t.shape()));
    t.data() = src.data();
  });
}

}  // namespace detail

inline Checkpoint encoder_checkpoint(const DualEncoder& enc, Branch branch) {
  Checkpoint ck;
  ck.branch = branch_name(branch);
  ck.tensors.push_back({"config", detail::config_tensor(enc.config)});
  const std::string prefix = std::string(branch_name(branch)) + ".";
  enc.visit([&](const std::string& name, const Tensor& t) {
    if (name.rfind(prefix, 0) == 0) ck.tensors.push_back({name.substr(prefix.size()), Tensor(t.shape(), t.data())});
  });
  return ck;
}

/// Writes point.ckpt, text.ckpt and vocab.txt into `dir`.
inline void save_encoder(const std::filesystem::path& dir, const DualEncoder& enc) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "point.ckpt", encoder_checkpoint(enc, Branch::Point));
  save_checkpoint(dir / "text.ckpt", encoder_checkpoint(enc, Branch::Text));
  std::ofstream vs(dir / "vocab.txt");
  for (std::size_t i = 0; i < enc.vocab.size(); ++i) vs << enc.vocab.word(i) << '\n';
  if (!vs) throw Error("failed writing vocabulary to '" + dir.string() + "'");
}

/// Loads a frozen dual encoder saved by save_encoder().
inline DualEncoder load_encoder(const std::filesystem::path& dir) {
  const Checkpoint pc = load_checkpoint(dir / "point.ckpt");
  const Checkpoint tc = load_checkpoint(dir / "text.ckpt");
  if (pc.branch != "point" || tc.branch != "text") throw Error("encoder checkpoints carry wrong branch tags");
  std::ifstream vs(dir / "vocab.txt");
  if (!vs) throw Error("missing vocabulary in '" + dir.string() + "'");
  std::vector<std::string> words;
  for (std::string w; std::getline(vs, w);)
    if (!w.empty()) words.push_back(w);
  const EncoderConfig cfg = detail::config_from_tensor(pc.get("config"));
  if (!(detail::config_from_tensor(tc.get("config")) == cfg)) throw Error("point and text checkpoints disagree on config");
  DualEncoder enc = init_dual_encoder(cfg, Vocabulary(words), 0);
  if (enc.vocab.size() != words.size()) throw Error("vocabulary file is not in canonical order");
  detail::load_into(pc, "point.", enc);
  detail::load_into(tc, "text.", enc);
  return enc;
}

inline Checkpoint prompt_checkpoint(const PromptSet& ps) {
  Checkpoint ck;
  ck.branch = "prompt";
  ck.tensors.push_back({"dims", Tensor({4}, {static_cast<double>(ps.depth), static_cast<double>(ps.point_length),
                                             static_cast<double>(ps.text_length), static_cast<double>(ps.width)})});
  for (std::size_t l = 0; l < ps.depth; ++l) ck.tensors.push_back({"point." + std::to_string(l), ps.point[l]});
  for (std::size_t l = 0; l < ps.depth; ++l) ck.tensors.push_back({"text." + std::to_string(l), ps.text[l]});
  return ck;
}

inline PromptSet prompts_from_checkpoint(const Checkpoint& ck) {
  if (ck.branch != "prompt") throw Error("checkpoint branch '" + ck.branch + "' is not a prompt set");
  const Tensor& dims = ck.get("dims");
  if (dims.size() != 4) throw Error("prompt checkpoint dims malformed");
  PromptSet ps;
  ps.depth = static_cast<std::size_t>(dims[0]);
  ps.point_length = static_cast<std::size_t>(dims[1]);
  ps.text_length = static_cast<std::size_t>(dims[2]);
  ps.width = static_cast<std::size_t>(dims[3]);
  for (std::size_t l = 0; l < ps.depth; ++l) {
    const Tensor& p = ck.get("point." + std::to_string(l));
    ps.point.emplace_back(p.shape(), p.data(), true);
  }
  for (std::size_t l = 0; l < ps.depth; ++l) {
    const Tensor& t = ck.get("text." + std::to_string(l));
    ps.text.emplace_back(t.shape(), t.data(), true);
  }
  return ps;
}

}  // namespace rpt
