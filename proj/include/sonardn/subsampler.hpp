#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

// Intra-cell positions of a 2x2 cell: 0=(0,0) 1=(1,0) 2=(0,1) 3=(1,1).
// A choice code selects one of the eight ordered 4-adjacent pairs
// (first pixel -> sub1, second pixel -> sub2).
inline constexpr std::array<std::pair<std::uint8_t, std::uint8_t>, 8> kAdjacentPairs{{
    {0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 3}, {3, 1}, {2, 3}, {3, 2},
}};

inline constexpr int cell_dx(std::uint8_t pos) { return pos & 1; }
inline constexpr int cell_dy(std::uint8_t pos) { return pos >> 1; }

/// Per-cell choice codes for a source raster of the recorded size.
struct CellChoices {
  int srcWidth = 0;
  int srcHeight = 0;
  std::vector<std::uint8_t> codes;  // row-major over cells, values in [0, 8)

  int cells_x() const noexcept { return srcWidth / 2; }
  int cells_y() const noexcept { return srcHeight / 2; }

  std::uint8_t code(int cx, int cy) const { return codes[static_cast<std::size_t>(cy) * cells_x() + cx]; }

  bool operator==(const CellChoices&) const = default;
};

struct SubsamplePair {
  ImageF sub1;
  ImageF sub2;
  CellChoices choices;
  std::uint64_t seed = 0;
};

/// Applies recorded cell choices to an image of the recorded size.
inline std::pair<ImageF, ImageF> resample_with(const ImageF& img, const CellChoices& choices) {
  require_gray(img, "resample_with");
  if (img.width() != choices.srcWidth || img.height() != choices.srcHeight)
    fail_data("resample_with: image size does not match cell choices");
  const int w = choices.cells_x(), h = choices.cells_y();
  ImageF sub1(w, h), sub2(w, h);
  std::vector<std::uint8_t> m1, m2;
  if (img.has_mask()) {
    m1.resize(static_cast<std::size_t>(w) * h);
    m2.resize(m1.size());
  }
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      const auto [a, b] = kAdjacentPairs[choices.code(cx, cy)];
      const int ax = 2 * cx + cell_dx(a), ay = 2 * cy + cell_dy(a);
      const int bx = 2 * cx + cell_dx(b), by = 2 * cy + cell_dy(b);
      sub1.at(cx, cy) = img.at(ax, ay);
      sub2.at(cx, cy) = img.at(bx, by);
      if (img.has_mask()) {
        const std::size_t i = static_cast<std::size_t>(cy) * w + cx;
        m1[i] = img.valid(ax, ay);
        m2[i] = img.valid(bx, by);
      }
    }
  }
  if (img.has_mask()) {
    sub1.set_mask(std::move(m1));
    sub2.set_mask(std::move(m2));
  }
  return {std::move(sub1), std::move(sub2)};
}

/// Draws one ordered 4-adjacent pixel pair per 2x2 cell, uniformly and
/// deterministically under seed. A trailing odd row/column is dropped.
inline SubsamplePair make_subsample_pair(const ImageF& img, std::uint64_t seed) {
  require_gray(img, "make_subsample_pair");
  if (img.width() < 2 || img.height() < 2) fail_data("make_subsample_pair: image smaller than 2x2");
  SubsamplePair pair;
  pair.seed = seed;
  pair.choices.srcWidth = img.width();
  pair.choices.srcHeight = img.height();
  pair.choices.codes.resize(static_cast<std::size_t>(img.width() / 2) * (img.height() / 2));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 7);
  for (auto& c : pair.choices.codes) c = static_cast<std::uint8_t>(pick(rng));
  std::tie(pair.sub1, pair.sub2) = resample_with(img, pair.choices);
  return pair;
}

/// CSV form: `cell_x,cell_y,first,second` with intra-cell positions 0..3.
/// The source size is carried in a leading `# source WxH` line.
inline void write_cell_choices_csv(const CellChoices& choices, std::ostream& out) {
  out << "# source " << choices.srcWidth << "x" << choices.srcHeight << "\n";
  out << "cell_x,cell_y,first,second\n";
  for (int cy = 0; cy < choices.cells_y(); ++cy)
    for (int cx = 0; cx < choices.cells_x(); ++cx) {
      const auto [a, b] = kAdjacentPairs[choices.code(cx, cy)];
      out << cx << "," << cy << "," << int(a) << "," << int(b) << "\n";
    }
}

inline CellChoices read_cell_choices_csv(std::istream& in) {
  CellChoices c;
  std::string line;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "# source %dx%d", &c.srcWidth, &c.srcHeight) != 2)
    fail_data("cell choices CSV: missing source header");
  std::getline(in, line);  // column header
  c.codes.assign(static_cast<std::size_t>(c.cells_x()) * c.cells_y(), 0);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int cx, cy, a, b;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d", &cx, &cy, &a, &b) != 4) fail_data("cell choices CSV: bad row");
    if (cx < 0 || cy < 0 || cx >= c.cells_x() || cy >= c.cells_y()) fail_data("cell choices CSV: cell out of range");
    int code = -1;
    for (int k = 0; k < 8; ++k)
      if (kAdjacentPairs[k].first == a && kAdjacentPairs[k].second == b) code = k;
    if (code < 0) fail_data("cell choices CSV: positions are not an ordered 4-adjacent pair");
    c.codes[static_cast<std::size_t>(cy) * c.cells_x() + cx] = static_cast<std::uint8_t>(code);
    ++seen;
  }
  if (seen != c.codes.size()) fail_data("cell choices CSV: row count mismatch");
  return c;
}

/// Compact binary form: "SDNCELL1", u32 width, u32 height, one byte per cell.
inline void write_cell_choices_binary(const CellChoices& choices, std::ostream& out) {
  out.write("SDNCELL1", 8);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(choices.srcWidth),
                                 static_cast<std::uint32_t>(choices.srcHeight)};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(choices.codes.data()), static_cast<std::streamsize>(choices.codes.size()));
}

inline CellChoices read_cell_choices_binary(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "SDNCELL1") fail_data("cell choices: bad magic");
  std::uint32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  CellChoices c;
  c.srcWidth = static_cast<int>(dims[0]);
  c.srcHeight = static_cast<int>(dims[1]);
  c.codes.resize(static_cast<std::size_t>(c.cells_x()) * c.cells_y());
  in.read(reinterpret_cast<char*>(c.codes.data()), static_cast<std::streamsize>(c.codes.size()));
  if (!in) fail_data("cell choices: truncated payload");
  for (auto v : c.codes)
    if (v >= 8) fail_data("cell choices: invalid code");
  return c;
}

}  // namespace sonardn
