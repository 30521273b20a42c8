// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "rpt/core/rng.hpp"
#include "rpt/model/point_cloud.hpp"

namespace rpt {

/// The 16 built-in families in canonical (alphabetical) order.
inline const std::vector<std::string>& shape_families() {
  static const std::vector<std::string> f = {"capsule",  "cone",   "cross",   "cube",       "cuboid", "cylinder",
                                             "disk_stack", "ellipsoid", "helix", "l_bracket", "plane",  "pyramid",
                                             "sphere",   "star_prism", "torus", "tube"};
  return f;
}

/// Acquisition styles used to build shifted target domains.
inline const std::vector<std::string>& domain_styles() {
  static const std::vector<std::string> s = {"clean", "partial", "noisy", "background", "squashed"};
  return s;
}

/// "sphere" or "sphere:partial" split into family and style.
struct FamilySpec {
  std::string family;
  std::string style = "clean";

  static FamilySpec parse(const std::string& text) {
    FamilySpec f;
    const auto colon = text.find(':');
    f.family = text.substr(0, colon);
    if (colon != std::string::npos) f.style = text.substr(colon + 1);
    const auto& fams = shape_families();
    if (std::find(fams.begin(), fams.end(), f.family) == fams.end())
      throw Error("unknown shape family '" + f.family + "'");
    const auto& styles = domain_styles();
    if (std::find(styles.begin(), styles.end(), f.style) == styles.end())
      throw Error("unknown domain style '" + f.style + "' in '" + text + "'");
    return f;
  }
};

/// Per-sample draw: axis scales, pose and surface noise.
struct ShapeParams {
  Point3 scale{1.0, 1.0, 1.0};
  double yaw = 0.0;   // about z
  double tilt = 0.0;  // about x, applied after yaw
  double noise = 0.0;
};

namespace detail {

struct Surface {
  double area;
  std::function<Point3(Rng&)> sample;
};

inline Point3 box_surface_point(Rng& rng, const Point3& lo, const Point3& hi) {
  const double ex = hi[0] - lo[0], ey = hi[1] - lo[1], ez = hi[2] - lo[2];
  const double axy = ex * ey, axz = ex * ez, ayz = ey * ez;
  const double total = 2 * (axy + axz + ayz);
  double r = uniform(rng, 0.0, total);
  const bool upper = uniform(rng, 0.0, 1.0) < 0.5;
  Point3 p{uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]), uniform(rng, lo[2], hi[2])};
  if ((r -= 2 * axy) < 0) p[2] = upper ? hi[2] : lo[2];
  else if ((r -= 2 * axz) < 0) p[1] = upper ? hi[1] : lo[1];
  else p[0] = upper ? hi[0] : lo[0];
  return p;
}

inline double box_area(const Point3& lo, const Point3& hi) {
  const double ex = hi[0] - lo[0], ey = hi[1] - lo[1], ez = hi[2] - lo[2];
  return 2 * (ex * ey + ex * ez + ey * ez);
}

inline Surface box(Point3 lo, Point3 hi) {
  return {box_area(lo, hi), [lo, hi](Rng& rng) { return box_surface_point(rng, lo, hi); }};
}

inline Point3 on_unit_sphere(Rng& rng) {
  for (;;) {
    Point3 v{gaussian(rng, 0, 1), gaussian(rng, 0, 1), gaussian(rng, 0, 1)};
    const double n = norm(v);
    if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

inline Surface disk(double radius, double z) {
  return {std::numbers::pi * radius * radius, [radius, z](Rng& rng) {
            const double r = radius * std::sqrt(uniform(rng, 0, 1)), a = uniform(rng, 0, 2 * std::numbers::pi);
            return Point3{r * std::cos(a), r * std::sin(a), z};
          }};
}

inline Surface annulus(double r_in, double r_out, double z) {
  return {std::numbers::pi * (r_out * r_out - r_in * r_in), [=](Rng& rng) {
            const double r = std::sqrt(uniform(rng, r_in * r_in, r_out * r_out));
            const double a = uniform(rng, 0, 2 * std::numbers::pi);
            return Point3{r * std::cos(a), r * std::sin(a), z};
          }};
}

inline Surface lateral(double radius, double z0, double z1) {
  return {2 * std::numbers::pi * radius * (z1 - z0), [=](Rng& rng) {
            const double a = uniform(rng, 0, 2 * std::numbers::pi);
            return Point3{radius * std::cos(a), radius * std::sin(a), uniform(rng, z0, z1)};
          }};
}

inline Surface hemisphere(double radius, double zc, bool up) {
  return {2 * std::numbers::pi * radius * radius, [=](Rng& rng) {
            Point3 v = on_unit_sphere(rng);
            if ((v[2] < 0) == up) v[2] = -v[2];
            return Point3{radius * v[0], radius * v[1], zc + radius * v[2]};
          }};
}

inline Surface triangle(Point3 a, Point3 b, Point3 c) {
  const Point3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]}, v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Point3 x{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  return {0.5 * norm(x), [=](Rng& rng) {
            double s = uniform(rng, 0, 1), t = uniform(rng, 0, 1);
            if (s + t > 1) s = 1 - s, t = 1 - t;
            return Point3{a[0] + s * u[0] + t * v[0], a[1] + s * u[1] + t * v[1], a[2] + s * u[2] + t * v[2]};
          }};
}

inline std::vector<Surface> star_prism() {
  const int tips = 5;
  const double outer = 1.0, inner = 0.45, h = 0.3;
  std::vector<std::array<double, 2>> poly;
  for (int i = 0; i < 2 * tips; ++i) {
    const double a = std::numbers::pi * i / tips + std::numbers::pi / 2;
    const double r = i % 2 == 0 ? outer : inner;
    poly.push_back({r * std::cos(a), r * std::sin(a)});
  }
  std::vector<Surface> s;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    const Point3 p0{p[0], p[1], -h}, p1{p[0], p[1], h}, q0{q[0], q[1], -h}, q1{q[0], q[1], h};
    s.push_back(triangle(p0, q0, q1));
    s.push_back(triangle(p0, q1, p1));
    s.push_back(triangle({0, 0, h}, p1, q1));
    s.push_back(triangle({0, 0, -h}, p0, q0));
  }
  return s;
}

inline std::vector<Surface> family_surfaces(const std::string& f) {
  using namespace std::numbers;
  if (f == "sphere") return {{4 * pi, [](Rng& rng) { return on_unit_sphere(rng); }}};
  if (f == "ellipsoid")
    return {{4 * pi, [](Rng& rng) {
               const Point3 v = on_unit_sphere(rng);
               return Point3{v[0], 0.6 * v[1], 0.35 * v[2]};
             }}};
  if (f == "cube") return {box({-1, -1, -1}, {1, 1, 1})};
  if (f == "cuboid") return {box({-1, -0.6, -0.3}, {1, 0.6, 0.3})};
  if (f == "cylinder") return {lateral(0.5, -1, 1), disk(0.5, -1), disk(0.5, 1)};
  if (f == "cone") {
    const double r = 0.7, h = 2.0, slant = std::sqrt(r * r + h * h);
    return {disk(r, -1), {pi * r * slant, [=](Rng& rng) {
                            const double t = std::sqrt(uniform(rng, 0, 1));  // area grows linearly toward the base
                            const double a = uniform(rng, 0, 2 * pi);
                            return Point3{t * r * std::cos(a), t * r * std::sin(a), 1.0 - t * h};
                          }}};
  }
  if (f == "torus") {
    const double big = 0.7, small = 0.25;
    return {{4 * pi * pi * big * small, [=](Rng& rng) {
               for (;;) {
                 const double u = uniform(rng, 0, 2 * pi), v = uniform(rng, 0, 2 * pi);
                 if (uniform(rng, 0, big + small) > big + small * std::cos(v)) continue;
                 const double ring = big + small * std::cos(v);
                 return Point3{ring * std::cos(u), ring * std::sin(u), small * std::sin(v)};
               }
             }}};
  }
  if (f == "pyramid") {
    const Point3 apex{0, 0, 0.8}, a{-0.8, -0.8, -0.8}, b{0.8, -0.8, -0.8}, c{0.8, 0.8, -0.8}, d{-0.8, 0.8, -0.8};
    return {triangle(a, b, apex), triangle(b, c, apex), triangle(c, d, apex), triangle(d, a, apex), triangle(a, b, c),
            triangle(a, c, d)};
  }
  if (f == "capsule") return {lateral(0.4, -0.6, 0.6), hemisphere(0.4, 0.6, true), hemisphere(0.4, -0.6, false)};
  if (f == "plane") return {{4.0, [](Rng& rng) { return Point3{uniform(rng, -1, 1), uniform(rng, -1, 1), 0.0}; }}};
  if (f == "helix") {
    const double turns = 3, radius = 0.6, tube = 0.08;
    return {{1.0, [=](Rng& rng) {
               const double t = uniform(rng, 0, 1), phi = 2 * pi * turns * t, a = uniform(rng, 0, 2 * pi);
               const Point3 c{radius * std::cos(phi), radius * std::sin(phi), -1 + 2 * t};
               const Point3 radial{std::cos(phi), std::sin(phi), 0};
               return Point3{c[0] + tube * std::cos(a) * radial[0], c[1] + tube * std::cos(a) * radial[1],
                             c[2] + tube * std::sin(a)};
             }}};
  }
  if (f == "star_prism") return star_prism();
  if (f == "l_bracket") return {box({-1, -0.5, -0.15}, {1, -0.1, 0.15}), box({-1, -0.1, -0.15}, {-0.6, 1, 0.15})};
  if (f == "tube") return {lateral(0.5, -1, 1), lateral(0.4, -1, 1), annulus(0.4, 0.5, -1), annulus(0.4, 0.5, 1)};
  if (f == "disk_stack") {
    std::vector<Surface> s;
    for (double z : {-0.8, 0.0, 0.8}) {
      s.push_back(disk(0.8, z - 0.05));
      s.push_back(disk(0.8, z + 0.05));
      s.push_back(lateral(0.8, z - 0.05, z + 0.05));
    }
    return s;
  }
  if (f == "cross") return {box({-1, -0.2, -0.2}, {1, 0.2, 0.2}), box({-0.2, -1, -0.2}, {0.2, 1, 0.2})};
  throw Error("unknown shape family '" + f + "'");
}

inline Point3 rotate_point(const Point3& p, double yaw, double tilt) {
  const double cy = std::cos(yaw), sy = std::sin(yaw), ct = std::cos(tilt), st = std::sin(tilt);
  const Point3 q{cy * p[0] - sy * p[1], sy * p[0] + cy * p[1], p[2]};
  return {q[0], ct * q[1] - st * q[2], st * q[1] + ct * q[2]};
}

}  // namespace detail

/// Points drawn uniformly (by area) on the canonical surface of `family`,
/// then scaled, posed and perturbed by `params`. No normalization.
inline std::vector<Point3> sample_surface(const std::string& family, const ShapeParams& params, Rng& rng,
                                          std::size_t n) {
  const auto surfaces = detail::family_surfaces(family);
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& s : surfaces) cum.push_back(total += s.area);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = uniform(rng, 0.0, total);
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin()), surfaces.size() - 1);
    Point3 p = surfaces[k].sample(rng);
    for (int a = 0; a < 3; ++a) p[a] *= params.scale[a];
    p = detail::rotate_point(p, params.yaw, params.tilt);
    if (params.noise > 0)
      for (int a = 0; a < 3; ++a) p[a] += gaussian(rng, 0.0, params.noise);
    pts.push_back(p);
  }
  return pts;
}

inline constexpr double kMaxShapeNoise = 0.01;

/// Seeded draw of per-sample parameters. Sphere and cube stay isotropic so
/// they remain a sphere and a cube.
inline ShapeParams draw_shape_params(const std::string& family, Rng& rng) {
  ShapeParams p;
  const bool isotropic = family == "sphere" || family == "cube";
  for (int a = 0; a < 3; ++a) p.scale[a] = isotropic ? 1.0 : uniform(rng, 0.85, 1.15);
  p.yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  p.tilt = uniform(rng, -0.25, 0.25);
  p.noise = uniform(rng, 0.0, kMaxShapeNoise);
  return p;
}

/// One normalized sample of `family_spec` ("family" or "family:style").
inline PointCloud gen_shape(const std::string& family_spec, std::uint64_t seed, std::size_t n) {
  if (n < kMinPoints)
    throw Error("gen_shape needs n >= " + std::to_string(kMinPoints) + ", got " + std::to_string(n));
  const FamilySpec spec = FamilySpec::parse(family_spec);
  Rng rng = make_rng(derive_seed(seed, hash_str(spec.family)));
  ShapeParams params = draw_shape_params(spec.family, rng);
  if (spec.style == "noisy") params.noise = 0.04;
  if (spec.style == "squashed") params.scale[2] *= 0.5;

  PointCloud pc;
  pc.seed = seed;
  if (spec.style == "partial") {
    // Occlusion: keep only points on one side of a random cutting plane.
    const Point3 dir = detail::on_unit_sphere(rng);
    while (pc.points.size() < n) {
      for (const auto& p : sample_surface(spec.family, params, rng, n)) {
        if (pc.points.size() == n) break;
        if (p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2] < 0.3) pc.points.push_back(p);
      }
    }
  } else if (spec.style == "background") {
    // A patch of floor under the object, as in cluttered scans.
    const std::size_t floor_pts = n / 5;
    pc.points = sample_surface(spec.family, params, rng, n - floor_pts);
    double zmin = 1e300;
    for (const auto& p : pc.points) zmin = std::min(zmin, p[2]);
    for (std::size_t i = 0; i < floor_pts; ++i)
      pc.points.push_back({uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), zmin + gaussian(rng, 0.0, 0.01)});
  } else {
    pc.points = sample_surface(spec.family, params, rng, n);
  }
  normalize_unit(pc);
  return pc;
}

}  // namespace rpt
