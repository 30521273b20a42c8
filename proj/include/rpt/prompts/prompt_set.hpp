// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rpt/core/graph.hpp"
#include "rpt/core/optim.hpp"
#include "rpt/core/rng.hpp"
#include "rpt/model/sequence.hpp"

namespace rpt {

/// Learnable deep prompts for both branches: one r x d matrix (point) and one
/// s x d matrix (text) for each of the first `depth` transformer layers.
struct PromptSet {
  std::size_t depth = 0;
  std::size_t point_length = 0;
  std::size_t text_length = 0;
  std::size_t width = 0;
  std::vector<Tensor> point;
  std::vector<Tensor> text;

  std::size_t length(Branch b) const { return b == Branch::Point ? point_length : text_length; }
  const std::vector<Tensor>& layers(Branch b) const { return b == Branch::Point ? point : text; }
  std::vector<Tensor>& layers(Branch b) { return b == Branch::Point ? point : text; }

  std::size_t parameter_count() const { return depth * (point_length + text_length) * width; }

  std::vector<NamedParam> named_params() {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < depth; ++l) out.push_back({"prompt.point." + std::to_string(l), &point[l]});
    for (std::size_t l = 0; l < depth; ++l) out.push_back({"prompt.text." + std::to_string(l), &text[l]});
    return out;
  }

  /// Point layers first, then text layers, each row-major.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& t : point) flat.insert(flat.end(), t.data().begin(), t.data().end());
    for (const auto& t : text) flat.insert(flat.end(), t.data().begin(), t.data().end());
    return flat;
  }

  void load_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count())
      throw ShapeError("prompt vector has " + std::to_string(flat.size()) + " values, expected " +
                       std::to_string(parameter_count()));
    std::size_t off = 0;
    for (auto* group : {&point, &text})
      for (auto& t : *group) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.data().begin());
        off += t.size();
      }
  }

  friend bool operator==(const PromptSet& a, const PromptSet& b) {
    return a.depth == b.depth && a.point_length == b.point_length && a.text_length == b.text_length &&
           a.width == b.width && a.point == b.point && a.text == b.text;
  }
};

inline constexpr double kPromptInitStd = 0.02;

/// Seeded Gaussian (std 0.02) prompts; `max_depth` is the encoder block count.
inline PromptSet init_prompt_set(std::size_t depth, std::size_t point_length, std::size_t text_length,
                                 std::size_t width, std::uint64_t seed, std::size_t max_depth) {
  if (depth < 1 || depth > max_depth)
    throw Error("prompt depth " + std::to_string(depth) + " outside [1, " + std::to_string(max_depth) + "]");
  if (point_length < 1 || text_length < 1) throw Error("prompt lengths must be at least 1");
  if (width < 1) throw Error("prompt width must be at least 1");
  PromptSet ps;
  ps.depth = depth;
  ps.point_length = point_length;
  ps.text_length = text_length;
  ps.width = width;
  Rng rng = make_rng(derive_seed(seed, 0x70726f6d7074ULL));
  for (std::size_t l = 0; l < depth; ++l)
    ps.point.push_back(Tensor::randn({point_length, width}, kPromptInitStd, rng, true));
  for (std::size_t l = 0; l < depth; ++l)
    ps.text.push_back(Tensor::randn({text_length, width}, kPromptInitStd, rng, true));
  return ps;
}

/// Deep prompting at the input of block `layer`. For layer < depth the prompt
/// slots of every sequence are (re)filled with that layer's prompts, inserting
/// them at layer 0; deeper layers pass the slots through as ordinary tokens.
/// A non-const PromptSet is bound trainable, a const one as a frozen view.
template <class Prompts>
  requires std::is_same_v<std::remove_const_t<Prompts>, PromptSet>
Var inject_prompts(Var x, std::size_t layer, Prompts& prompts, Branch branch, std::vector<SeqLayout>& layout,
                   std::size_t num_blocks) {
  if (layer >= num_blocks)
    throw Error("layer " + std::to_string(layer) + " out of range for " + std::to_string(num_blocks) + " blocks");
  if (layer >= prompts.depth) return x;
  if (x.cols() != prompts.width)
    throw ShapeError("prompt width " + std::to_string(prompts.width) + " does not match sequence width " +
                     std::to_string(x.cols()));
  const std::size_t n = prompts.length(branch);
  for (const auto& s : layout) {
    if (layer > 0 && s.prompt_slots != n)
      throw Error(std::string(branch_name(branch)) + " sequence lacks prompt slots at layer " + std::to_string(layer));
    if (layer == 0 && s.prompt_slots != 0) throw Error("sequence already carries prompt slots at layer 0");
  }
  Graph& g = x.graph();
  Var p = bind(g, prompts.layers(branch)[layer]);
  std::vector<Var> pieces;
  pieces.reserve(layout.size() * 3);
  for (auto& s : layout) {
    const std::size_t head_end = s.offset + s.prompt_at;
    const std::size_t tail_begin = head_end + s.prompt_slots;
    const std::size_t end = s.offset + s.length;
    if (s.prompt_at > 0) pieces.push_back(slice_rows(x, s.offset, head_end));
    pieces.push_back(p);
    if (tail_begin < end) pieces.push_back(slice_rows(x, tail_begin, end));
    if (s.prompt_slots == 0) {
      s.length += n;
      if (s.readout >= s.prompt_at) s.readout += n;
      s.prompt_slots = n;
    }
  }
  restack(layout);
  return concat(pieces, 0);
}

}  // namespace rpt
