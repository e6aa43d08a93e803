#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "sonardn/image.hpp"

namespace sonardn {

namespace detail {

inline ImageF draw_shapes(int width, int height, std::uint64_t seed, int shapes, double minRadius, double radiusSpan) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(0.1, 0.9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ImageF img(width, height, 1, level(rng) * 0.5);
  const double minDim = std::min(width, height);
  for (int s = 0; s < shapes; ++s) {
    const double value = level(rng);
    const double cx = unit(rng) * width;
    const double cy = unit(rng) * height;
    const double rx = (minRadius + radiusSpan * unit(rng)) * minDim;
    const double ry = (minRadius + radiusSpan * unit(rng)) * minDim;
    const bool ellipse = unit(rng) < 0.5;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = (x + 0.5 - cx) / rx;
        const double dy = (y + 0.5 - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) img.at(x, y) = value;
      }
  }
  return img;
}

}  // namespace detail

/// Piecewise-constant test scene: a flat background with random rectangles
/// and ellipses of distinct intensity. Deterministic under seed.
inline ImageF make_piecewise_scene(int width, int height, std::uint64_t seed, int shapes = 12) {
  return detail::draw_shapes(width, height, seed, shapes, 0.05, 0.2);
}

/// Many small objects softened by a unit-sigma point spread, giving a
/// corner-rich scene for feature matching.
inline ImageF make_cluttered_scene(int width, int height, std::uint64_t seed, int shapes = 100) {
  return gaussian_blur(detail::draw_shapes(width, height, seed, shapes, 0.02, 0.04), 1.0);
}

/// Wedge-shaped validity mask with its apex at the bottom center, spanning the
/// given half-angle. Mimics the insonified region of a forward-looking sonar.
inline std::vector<std::uint8_t> make_fan_mask(int width, int height, double halfAngleDeg = 40.0) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(width) * height, 0);
  const double ax = width / 2.0, ay = static_cast<double>(height);
  const double limit = halfAngleDeg * std::numbers::pi / 180.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x + 0.5 - ax, dy = ay - (y + 0.5);
      const double ang = std::atan2(std::abs(dx), dy);
      const double r = std::hypot(dx, dy);
      if (ang <= limit && r <= height) m[static_cast<std::size_t>(y) * width + x] = 1;
    }
  return m;
}

}  // namespace sonardn
