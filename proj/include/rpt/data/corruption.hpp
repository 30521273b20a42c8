// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rpt/core/rng.hpp"
#include "rpt/model/point_cloud.hpp"

namespace rpt {

enum class CorruptionKind { AddGlobal, AddLocal, DropGlobal, DropLocal, Rotate, Scale, Jitter };

inline constexpr std::array<CorruptionKind, 7> kAllCorruptions = {
    CorruptionKind::AddGlobal, CorruptionKind::AddLocal, CorruptionKind::DropGlobal, CorruptionKind::DropLocal,
    CorruptionKind::Rotate,    CorruptionKind::Scale,    CorruptionKind::Jitter};

inline std::string corruption_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::AddGlobal: return "add_global";
    case CorruptionKind::AddLocal: return "add_local";
    case CorruptionKind::DropGlobal: return "drop_global";
    case CorruptionKind::DropLocal: return "drop_local";
    case CorruptionKind::Rotate: return "rotate";
    case CorruptionKind::Scale: return "scale";
    case CorruptionKind::Jitter: return "jitter";
  }
  return "?";
}

inline CorruptionKind parse_corruption(const std::string& s) {
  for (auto k : kAllCorruptions)
    if (corruption_name(k) == s) return k;
  throw Error("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Jitter;
  int severity = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (severity < 0 || severity > 4) throw Error("corruption severity must be in 0..4, got " + std::to_string(severity));
  }
};

/// Percentage of points removed by the drop corruptions: floor(12.5 s).
inline int drop_percent(int severity) { return static_cast<int>(std::floor(12.5 * severity)); }

/// Applies one atomic corruption. Every random draw is made independently of
/// the severity, which only scales the magnitude, so for a fixed seed the
/// perturbation grows monotonically with severity. Severity 0 returns the
/// input unchanged.
inline PointCloud corrupt(const PointCloud& pc, const CorruptionSpec& spec) {
  spec.validate();
  if (spec.severity == 0) return pc;
  validate_cloud(pc);
  const double s = spec.severity;
  Rng rng = make_rng(derive_seed(spec.seed, hash_str(corruption_name(spec.kind))));
  PointCloud out = pc;
  auto& pts = out.points;
  const std::size_t n = pts.size();

  auto drop_count = [&]() {
    const std::size_t k = n * static_cast<std::size_t>(drop_percent(spec.severity)) / 100;
    if (n - k < kMinPoints)
      throw Error("corruption " + corruption_name(spec.kind) + " would leave " + std::to_string(n - k) +
                  " points (< " + std::to_string(kMinPoints) + ")");
    return k;
  };

  switch (spec.kind) {
    case CorruptionKind::AddGlobal: {
      Point3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
      for (const auto& p : pc.points)
        for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]), hi[a] = std::max(hi[a], p[a]);
      const int count = 10 * spec.severity;
      for (int i = 0; i < count; ++i)
        pts.push_back({uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]), uniform(rng, lo[2], hi[2])});
      break;
    }
    case CorruptionKind::AddLocal: {
      const int anchors = static_cast<int>(std::ceil(s));
      std::vector<Point3> centers;
      for (int a = 0; a < anchors; ++a) centers.push_back(pc.points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
      const int count = 10 * spec.severity;
      for (int i = 0; i < count; ++i) {
        const Point3& c = centers[static_cast<std::size_t>(i % anchors)];
        pts.push_back({c[0] + gaussian(rng, 0, 0.05), c[1] + gaussian(rng, 0, 0.05), c[2] + gaussian(rng, 0, 0.05)});
      }
      break;
    }
    case CorruptionKind::DropGlobal: {
      const std::size_t k = drop_count();
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<char> drop(n, 0);
      for (std::size_t i = 0; i < k; ++i) drop[idx[i]] = 1;
      pts.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) pts.push_back(pc.points[i]);
      break;
    }
    case CorruptionKind::DropLocal: {
      const std::size_t k = drop_count();
      const Point3 anchor = pc.points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return sq_dist(pc.points[a], anchor) < sq_dist(pc.points[b], anchor);
      });
      std::vector<char> drop(n, 0);
      for (std::size_t i = 0; i < k; ++i) drop[idx[i]] = 1;
      pts.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) pts.push_back(pc.points[i]);
      break;
    }
    case CorruptionKind::Rotate: {
      Point3 axis{gaussian(rng, 0, 1), gaussian(rng, 0, 1), gaussian(rng, 0, 1)};
      const double an = norm(axis);
      for (auto& v : axis) v /= an;
      const double angle = uniform(rng, 0.0, 1.0) * (15.0 * s) * std::numbers::pi / 180.0;
      const double c = std::cos(angle), si = std::sin(angle), t = 1 - c;
      const double x = axis[0], y = axis[1], z = axis[2];
      const double r[3][3] = {{t * x * x + c, t * x * y - si * z, t * x * z + si * y},
                              {t * x * y + si * z, t * y * y + c, t * y * z - si * x},
                              {t * x * z - si * y, t * y * z + si * x, t * z * z + c}};
      for (auto& p : pts) {
        const Point3 q = p;
        for (int a = 0; a < 3; ++a) p[a] = r[a][0] * q[0] + r[a][1] * q[1] + r[a][2] * q[2];
      }
      break;
    }
    case CorruptionKind::Scale: {
      Point3 f;
      for (int a = 0; a < 3; ++a) f[a] = std::pow(1.0 + 0.1 * s, uniform(rng, -1.0, 1.0));
      for (auto& p : pts)
        for (int a = 0; a < 3; ++a) p[a] *= f[a];
      break;
    }
    case CorruptionKind::Jitter: {
      for (auto& p : pts)
        for (int a = 0; a < 3; ++a) p[a] += 0.01 * s * gaussian(rng, 0.0, 1.0);
      break;
    }
  }
  return out;
}

}  // namespace rpt
