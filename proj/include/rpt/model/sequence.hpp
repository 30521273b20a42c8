// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace rpt {

enum class Branch { Point, Text };

inline const char* branch_name(Branch b) { return b == Branch::Point ? "point" : "text"; }

/// Placement of one sequence inside a row-stacked batch.
struct SeqLayout {
  std::size_t offset = 0;        // first row in the stacked batch
  std::size_t length = 0;        // rows, including prompt slots
  std::size_t prompt_at = 0;     // index where prompt slots start / will be inserted
  std::size_t prompt_slots = 0;  // 0 until prompts are first injected
  std::size_t readout = 0;       // row read out as the sequence feature
};

/// Recomputes offsets after lengths changed.
inline void restack(std::vector<SeqLayout>& layout) {
  std::size_t off = 0;
  for (auto& s : layout) {
    s.offset = off;
    off += s.length;
  }
}

inline std::size_t total_rows(const std::vector<SeqLayout>& layout) {
  std::size_t n = 0;
  for (const auto& s : layout) n += s.length;
  return n;
}

}  // namespace rpt
