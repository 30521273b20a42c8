// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rpt/data/descriptions.hpp"

namespace rpt {

/// sos, v word tokens, the class token, eos. Text prompts go between the
/// class token and eos.
struct TokenSequence {
  std::vector<std::size_t> ids;

  std::size_t size() const { return ids.size(); }
  std::size_t class_slot() const { return ids.size() - 2; }
  std::size_t eos_slot() const { return ids.size() - 1; }
  std::size_t words() const { return ids.size() - 3; }
};

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && std::string_view(".,?:;!").find(cur.back()) != std::string_view::npos) cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

/// Word-level vocabulary over the description-bank word list.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0, kUnk = 1, kSos = 2, kEos = 3;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  explicit Vocabulary(const std::vector<std::string>& words) {
    words_ = {"<pad>", "<unk>", "<sos>", "<eos>"};
    std::set<std::string> sorted(words.begin(), words.end());
    for (const auto& w : sorted)
      if (!w.empty() && w.front() != '<') words_.push_back(w);
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
  }

  /// Every word a generated description of `classes` can contain.
  static Vocabulary for_classes(const std::vector<std::string>& classes) {
    std::vector<std::string> words(classes.begin(), classes.end());
    auto add_text = [&](const std::string& t) {
      for (auto& w : split_words(t))
        if (w.find('{') == std::string::npos) words.push_back(w);
    };
    for (const auto& t : manual_templates()) add_text(t);
    for (auto s : {DescriptionStyle::QuestionAnswer, DescriptionStyle::Caption, DescriptionStyle::Keywords})
      for (const auto& t : style_templates(s)) add_text(t);
    for (const auto& c : classes)
      for (const auto& a : class_attributes(c)) words.push_back(a);
    for (const auto& a : class_attributes("")) words.push_back(a);
    return Vocabulary(words);
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const { return words_.at(id); }

  std::size_t id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
  }

  /// Tokenizes a rendered description of `class_name`: occurrences of the
  /// class word are lifted out of the word list into the class slot.
  TokenSequence encode(const std::string& description, const std::string& class_name) const {
    TokenSequence seq;
    seq.ids.push_back(kSos);
    for (const auto& w : split_words(description))
      if (w != class_name) seq.ids.push_back(id(w));
    seq.ids.push_back(id(class_name));
    seq.ids.push_back(kEos);
    return seq;
  }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace rpt
