// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rpt/core/rng.hpp"
#include "rpt/core/tensor.hpp"

namespace rpt {

inline constexpr std::string_view kClassPlaceholder = "{class}";
inline constexpr std::string_view kCanonicalTemplate = "a point cloud of a {class}.";

/// 64 hand-written sentence templates.
inline const std::vector<std::string>& manual_templates() {
  static const std::vector<std::string> t = {
      "a point cloud of a {class}.",
      "a 3d point cloud of a {class}.",
      "a sparse point cloud of a {class}.",
      "a dense point cloud of a {class}.",
      "a noisy point cloud of a {class}.",
      "a clean point cloud of a {class}.",
      "a scan of a {class}.",
      "a lidar scan of a {class}.",
      "a depth scan of a {class}.",
      "a partial scan of a {class}.",
      "a full scan of a {class}.",
      "a 3d model of a {class}.",
      "a 3d shape of a {class}.",
      "a 3d object of a {class}.",
      "a cad model of a {class}.",
      "a mesh of a {class}.",
      "a rendering of a {class}.",
      "a sampled surface of a {class}.",
      "a small {class}.",
      "a large {class}.",
      "a big {class}.",
      "a tiny {class}.",
      "a rotated {class}.",
      "a tilted {class}.",
      "an upright {class}.",
      "a centered {class}.",
      "a scaled {class}.",
      "a stretched {class}.",
      "a squashed {class}.",
      "a smooth {class}.",
      "a rough {class}.",
      "a simple {class}.",
      "a synthetic {class}.",
      "a real {class}.",
      "a toy {class}.",
      "a plastic {class}.",
      "a metal {class}.",
      "a wooden {class}.",
      "a single {class}.",
      "one {class}.",
      "the {class}.",
      "this is a {class}.",
      "there is a {class} in the scene.",
      "there is a {class} here.",
      "a photo of a {class} as points.",
      "a set of points shaped like a {class}.",
      "points sampled from a {class}.",
      "points on the surface of a {class}.",
      "the surface of a {class}.",
      "the outline of a {class}.",
      "the geometry of a {class}.",
      "the shape of a {class}.",
      "a {class} shape.",
      "a {class} object.",
      "a {class} model.",
      "an object that looks like a {class}.",
      "something shaped like a {class}.",
      "a good point cloud of a {class}.",
      "a bad point cloud of a {class}.",
      "a low resolution point cloud of a {class}.",
      "a high resolution point cloud of a {class}.",
      "a corrupted point cloud of a {class}.",
      "a point cloud of the {class}.",
      "a point cloud of my {class}.",
  };
  return t;
}

/// Sentence styles that mimic three ways of querying a language model:
/// question answering, caption generation, and keyword sentences.
enum class DescriptionStyle { QuestionAnswer, Caption, Keywords };

inline const std::vector<std::string>& style_templates(DescriptionStyle style) {
  static const std::vector<std::string> qa = {
      "what is this? it is a {adj} {class}.",
      "what shape is this? a {adj} {class}.",
      "which object is shown? a {class} that is {adj}.",
      "what does the point cloud show? a {adj} {class}.",
  };
  static const std::vector<std::string> caption = {
      "a {adj} {class} made of many points.",
      "a {class} with a {adj} surface.",
      "a {adj} and {adj2} {class}.",
      "the points form a {adj} {class}.",
  };
  static const std::vector<std::string> keywords = {
      "{adj}, {adj2}, {class}.",
      "a {class} that looks {adj} and {adj2}.",
      "keywords: {class}, {adj}, {adj2}.",
      "{class} with {adj} parts.",
  };
  switch (style) {
    case DescriptionStyle::QuestionAnswer: return qa;
    case DescriptionStyle::Caption: return caption;
    case DescriptionStyle::Keywords: return keywords;
  }
  return qa;
}

/// Shape adjectives per known class; unknown classes fall back to a generic set.
inline const std::vector<std::string>& class_attributes(const std::string& class_name) {
  static const std::map<std::string, std::vector<std::string>> attrs = {
      {"capsule", {"rounded", "elongated", "pill-like", "smooth"}},
      {"cone", {"pointed", "tapered", "circular", "sharp"}},
      {"cross", {"symmetric", "plus-shaped", "flat", "branched"}},
      {"cube", {"boxy", "square", "flat", "angular"}},
      {"cuboid", {"boxy", "rectangular", "long", "angular"}},
      {"cylinder", {"round", "straight", "tall", "circular"}},
      {"disk_stack", {"layered", "stacked", "flat", "round"}},
      {"ellipsoid", {"oval", "smooth", "stretched", "rounded"}},
      {"helix", {"twisted", "spiral", "coiled", "thin"}},
      {"l_bracket", {"bent", "angular", "flat", "corner-shaped"}},
      {"plane", {"flat", "thin", "wide", "square"}},
      {"pyramid", {"pointed", "triangular", "angular", "tapered"}},
      {"sphere", {"round", "smooth", "ball-like", "symmetric"}},
      {"star_prism", {"spiky", "pointed", "symmetric", "prism-like"}},
      {"torus", {"ring-shaped", "round", "hollow", "donut-like"}},
      {"tube", {"hollow", "round", "long", "open"}},
  };
  static const std::vector<std::string> generic = {"simple", "solid", "plain", "small"};
  auto it = attrs.find(class_name);
  return it == attrs.end() ? generic : it->second;
}

inline std::string fill_template(std::string text, const std::string& key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
    text.replace(pos, key.size(), value);
  return text;
}

inline std::string render_description(const std::string& tmpl, const std::string& class_name) {
  return fill_template(tmpl, std::string(kClassPlaceholder), class_name);
}

/// Per-class description lists, in class order.
struct DescriptionBank {
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> descriptions;

  const std::vector<std::string>& of(const std::string& cls) const {
    auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) throw Error("description bank has no class '" + cls + "'");
    return descriptions[static_cast<std::size_t>(it - classes.begin())];
  }

  friend bool operator==(const DescriptionBank&, const DescriptionBank&) = default;
};

/// `n_t` distinct descriptions of `class_name`. The first is always the
/// canonical template; the rest are drawn without replacement from the manual
/// templates and the three attribute-filled styles.
inline std::vector<std::string> build_description_bank(const std::string& class_name, std::size_t n_t,
                                                       std::uint64_t seed) {
  if (n_t == 0) throw Error("description bank needs n_t >= 1");
  std::vector<std::string> pool;
  for (const auto& t : manual_templates()) pool.push_back(render_description(t, class_name));
  const auto& adj = class_attributes(class_name);
  for (auto style : {DescriptionStyle::QuestionAnswer, DescriptionStyle::Caption, DescriptionStyle::Keywords}) {
    for (const auto& t : style_templates(style)) {
      for (std::size_t a = 0; a < adj.size(); ++a) {
        std::string s = fill_template(t, "{adj2}", adj[(a + 1) % adj.size()]);
        s = fill_template(s, "{adj}", adj[a]);
        pool.push_back(render_description(s, class_name));
      }
    }
  }
  std::vector<std::string> out{pool.front()};
  Rng rng = make_rng(derive_seed(seed, hash_str(class_name)));
  std::vector<std::string> rest(pool.begin() + 1, pool.end());
  std::shuffle(rest.begin(), rest.end(), rng);
  for (const auto& s : rest) {
    if (out.size() >= n_t) break;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  if (out.size() < n_t) throw Error("description pool exhausted for class '" + class_name + "'");
  return out;
}

inline DescriptionBank build_description_bank(const std::vector<std::string>& classes, std::size_t n_t,
                                              std::uint64_t seed) {
  DescriptionBank bank;
  for (const auto& c : classes) {
    bank.classes.push_back(c);
    bank.descriptions.push_back(build_description_bank(c, n_t, seed));
  }
  return bank;
}

/// Text format: "## <class>" header lines, then one description per line.
inline void write_description_bank(std::ostream& os, const DescriptionBank& bank) {
  for (std::size_t i = 0; i < bank.classes.size(); ++i) {
    os << "## " << bank.classes[i] << '\n';
    for (const auto& d : bank.descriptions[i]) os << d << '\n';
  }
}

inline DescriptionBank read_description_bank(std::istream& is) {
  DescriptionBank bank;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("## ", 0) == 0) {
      bank.classes.push_back(line.substr(3));
      bank.descriptions.emplace_back();
    } else {
      if (bank.classes.empty())
        throw Error("description bank line " + std::to_string(lineno) + " precedes any class header");
      bank.descriptions.back().push_back(line);
    }
  }
  for (std::size_t i = 0; i < bank.classes.size(); ++i)
    if (bank.descriptions[i].empty()) throw Error("class '" + bank.classes[i] + "' has no descriptions");
  return bank;
}

}  // namespace rpt
