// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rpt/core/tensor.hpp"

namespace rpt {

using Point3 = std::array<double, 3>;

inline constexpr std::size_t kMinPoints = 64;

struct PointCloud {
  std::vector<Point3> points;
  int label = -1;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
};

inline double norm(const Point3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

inline double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Centers the cloud on its centroid and scales the farthest point to norm 1.
inline void normalize_unit(PointCloud& pc) {
  if (pc.points.empty()) throw Error("cannot normalize an empty point cloud");
  Point3 c{0.0, 0.0, 0.0};
  for (const auto& p : pc.points)
    for (int i = 0; i < 3; ++i) c[i] += p[i];
  for (int i = 0; i < 3; ++i) c[i] /= static_cast<double>(pc.points.size());
  double max_norm = 0.0;
  for (auto& p : pc.points) {
    for (int i = 0; i < 3; ++i) p[i] -= c[i];
    max_norm = std::max(max_norm, norm(p));
  }
  if (!(max_norm > 0.0)) throw Error("point cloud collapses to a single point");
  for (auto& p : pc.points)
    for (int i = 0; i < 3; ++i) p[i] /= max_norm;
}

inline void validate_cloud(const PointCloud& pc) {
  if (pc.size() < kMinPoints)
    throw Error("point cloud has " + std::to_string(pc.size()) + " points, need at least " +
                std::to_string(kMinPoints));
  for (const auto& p : pc.points)
    for (double v : p)
      if (!std::isfinite(v)) throw Error("point cloud contains a non-finite coordinate");
}

/// Point indices in lexicographic (x, y, z) order. Ties on identical
/// coordinates keep input order, which cannot change any downstream value.
inline std::vector<std::size_t> lexicographic_order(const std::vector<Point3>& pts) {
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pts[a] < pts[b]; });
  return idx;
}

/// Farthest-point sampling over the lexicographically sorted points. The first
/// center is the point of largest norm; every tie goes to the earliest point in
/// sorted order, so the result does not depend on input order.
inline std::vector<Point3> farthest_point_sample(const std::vector<Point3>& input, std::size_t count) {
  if (count == 0 || count > input.size())
    throw Error("farthest_point_sample: cannot pick " + std::to_string(count) + " of " +
                std::to_string(input.size()) + " points");
  const auto order = lexicographic_order(input);
  std::vector<Point3> pts;
  pts.reserve(input.size());
  for (std::size_t i : order) pts.push_back(input[i]);

  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double n2 = pts[i][0] * pts[i][0] + pts[i][1] * pts[i][1] + pts[i][2] * pts[i][2];
    if (n2 > best) {
      best = n2;
      first = i;
    }
  }
  std::vector<Point3> centers{pts[first]};
  std::vector<double> min_d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) min_d[i] = sq_dist(pts[i], pts[first]);
  while (centers.size() < count) {
    std::size_t pick = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (min_d[i] > far) {
        far = min_d[i];
        pick = i;
      }
    centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < pts.size(); ++i) min_d[i] = std::min(min_d[i], sq_dist(pts[i], pts[pick]));
  }
  return centers;
}

/// Local neighborhoods of a cloud: `centers` (u x 3) and for each center the
/// offsets of its k nearest neighbors (u*k x 3, center-relative).
struct PatchGeometry {
  Tensor centers;
  Tensor offsets;
  std::size_t patches = 0;
  std::size_t neighbors = 0;
};

inline PatchGeometry group_patches(const PointCloud& pc, std::size_t patches, std::size_t neighbors) {
  validate_cloud(pc);
  if (pc.size() < neighbors)
    throw Error("point cloud has " + std::to_string(pc.size()) + " points, fewer than k = " +
                std::to_string(neighbors));
  const auto centers = farthest_point_sample(pc.points, patches);
  const auto order = lexicographic_order(pc.points);

  PatchGeometry out;
  out.patches = patches;
  out.neighbors = neighbors;
  std::vector<double> c(patches * 3), off(patches * neighbors * 3);
  std::vector<std::pair<double, std::size_t>> dist(pc.size());
  for (std::size_t p = 0; p < patches; ++p) {
    for (int i = 0; i < 3; ++i) c[p * 3 + i] = centers[p][i];
    for (std::size_t j = 0; j < order.size(); ++j) dist[j] = {sq_dist(pc.points[order[j]], centers[p]), j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbors), dist.end());
    for (std::size_t n = 0; n < neighbors; ++n) {
      const auto& q = pc.points[order[dist[n].second]];
      for (int i = 0; i < 3; ++i) off[(p * neighbors + n) * 3 + i] = q[i] - centers[p][i];
    }
  }
  out.centers = Tensor({patches, 3}, std::move(c));
  out.offsets = Tensor({patches * neighbors, 3}, std::move(off));
  return out;
}

}  // namespace rpt
