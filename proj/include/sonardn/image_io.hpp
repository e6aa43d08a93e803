#pragma once

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

enum class BitDepth { Eight = 8, Sixteen = 16 };

namespace detail {

struct RawRaster {
  int width = 0;
  int height = 0;
  int channels = 1;
  int maxValue = 255;
  std::vector<std::uint32_t> values;
};

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline RawRaster read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail_data("cannot open image: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail_data("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_data("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_data("libpng init failed");
  }
  RawRaster raster;
  std::string error;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_data("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bitDepth = png_get_bit_depth(png, info);
  const int colorType = png_get_color_type(png, info);
  if (colorType == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (bitDepth != 8 && bitDepth != 16) {
    error = "unsupported PNG bit depth " + std::to_string(bitDepth) + ": " + path.string();
  }
  if (colorType & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bitDepth == 16) png_set_swap(png);  // host little-endian 16-bit words
  if (error.empty()) {
    png_read_update_info(png, info);
    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    raster.maxValue = depth == 16 ? 65535 : 255;
    if (raster.channels != 1 && raster.channels != 3) error = "unsupported PNG channel layout: " + path.string();
    if (error.empty()) {
      const std::size_t rowBytes = png_get_rowbytes(png, info);
      std::vector<unsigned char> buf(rowBytes * raster.height);
      std::vector<png_bytep> rows(raster.height);
      for (int y = 0; y < raster.height; ++y) rows[y] = buf.data() + rowBytes * y;
      png_read_image(png, rows.data());
      const std::size_t n = static_cast<std::size_t>(raster.width) * raster.height * raster.channels;
      raster.values.resize(n);
      for (int y = 0; y < raster.height; ++y) {
        const unsigned char* row = rows[y];
        for (std::size_t i = 0; i < static_cast<std::size_t>(raster.width) * raster.channels; ++i) {
          std::uint32_t v;
          if (depth == 16) {
            std::uint16_t w;
            std::memcpy(&w, row + 2 * i, 2);
            v = w;
          } else {
            v = row[i];
          }
          raster.values[static_cast<std::size_t>(y) * raster.width * raster.channels + i] = v;
        }
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!error.empty()) fail_data(error);
  return raster;
}

inline void write_png(const std::filesystem::path& path, const RawRaster& r) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail_data("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    fail_data("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_data("PNG write failed: " + path.string());
  }
  const int depth = r.maxValue > 255 ? 16 : 8;
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, r.width, r.height, depth, r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowLen = static_cast<std::size_t>(r.width) * r.channels;
  std::vector<unsigned char> row(rowLen * (depth / 8));
  for (int y = 0; y < r.height; ++y) {
    for (std::size_t i = 0; i < rowLen; ++i) {
      const std::uint32_t v = r.values[static_cast<std::size_t>(y) * rowLen + i];
      if (depth == 16) {
        row[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
      } else {
        row[i] = static_cast<unsigned char>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline RawRaster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open image: " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P6") fail_data("unsupported PNM variant (binary P5/P6 only): " + path.string());
  RawRaster r;
  r.channels = magic == "P6" ? 3 : 1;
  skip_pnm_space(in);
  in >> r.width;
  skip_pnm_space(in);
  in >> r.height;
  skip_pnm_space(in);
  in >> r.maxValue;
  in.get();
  if (!in || r.width <= 0 || r.height <= 0) fail_data("malformed PNM header: " + path.string());
  if (r.maxValue <= 0 || r.maxValue > 65535) fail_data("unsupported PNM maxval: " + path.string());
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const int bytes = r.maxValue > 255 ? 2 : 1;
  std::vector<unsigned char> buf(n * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail_data("truncated PNM payload: " + path.string());
  r.values.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    r.values[i] = bytes == 2 ? (static_cast<std::uint32_t>(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
  return r;
}

inline void write_pnm(const std::filesystem::path& path, const RawRaster& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write image: " + path.string());
  out << (r.channels == 3 ? "P6" : "P5") << "\n" << r.width << " " << r.height << "\n" << r.maxValue << "\n";
  for (std::uint32_t v : r.values) {
    if (r.maxValue > 255) {
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    } else {
      out.put(static_cast<char>(v));
    }
  }
  if (!out) fail_data("write failed: " + path.string());
}

inline RawRaster read_raster(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  fail_data("unsupported image extension: " + path.string());
}

}  // namespace detail

/// `<dir>/<stem>.mask.png` for an image path.
inline std::filesystem::path mask_sidecar_path(const std::filesystem::path& path) {
  return path.parent_path() / (path.stem().string() + ".mask.png");
}

/// Loads PNG (8/16-bit gray or RGB) or binary PGM/PPM, normalized to [0,1].
/// A `<stem>.mask.png` sidecar, if present, becomes the validity mask.
inline ImageF load_image(const std::filesystem::path& path) {
  const detail::RawRaster r = detail::read_raster(path);
  std::vector<double> samples(r.values.size());
  const double scale = 1.0 / r.maxValue;
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = r.values[i] * scale;
  ImageF img(r.width, r.height, std::move(samples), r.channels);

  const auto sidecar = mask_sidecar_path(path);
  const bool isMaskItself = path.stem().extension() == ".mask";
  if (!isMaskItself && std::filesystem::exists(sidecar)) {
    const detail::RawRaster m = detail::read_raster(sidecar);
    if (m.width != r.width || m.height != r.height) fail_data("mask dimension mismatch: " + sidecar.string());
    std::vector<std::uint8_t> mask(img.pixel_count());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      bool any = false;
      for (int c = 0; c < m.channels; ++c) any = any || m.values[i * m.channels + c] != 0;
      mask[i] = any ? 1 : 0;
    }
    img.set_mask(std::move(mask));
  }
  return img;
}

/// Quantizes with round-half-up and writes PNG or PGM/PPM by extension.
/// Writes the mask sidecar when the image carries a mask.
inline void save_image(const ImageF& img, const std::filesystem::path& path, BitDepth depth = BitDepth::Eight,
                       bool writeMask = true) {
  detail::RawRaster r;
  r.width = img.width();
  r.height = img.height();
  r.channels = img.channels();
  r.maxValue = depth == BitDepth::Sixteen ? 65535 : 255;
  r.values.resize(img.data().size());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    r.values[i] = static_cast<std::uint32_t>(std::floor(v * r.maxValue + 0.5));
  }
  const std::string ext = detail::lower_ext(path);
  if (ext == ".png") detail::write_png(path, r);
  else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") detail::write_pnm(path, r);
  else fail_data("unsupported image extension: " + path.string());

  if (writeMask && img.has_mask()) {
    detail::RawRaster m;
    m.width = img.width();
    m.height = img.height();
    m.values.resize(img.pixel_count());
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = img.valid(i) ? 255 : 0;
    detail::write_png(mask_sidecar_path(path), m);
  }
}

/// Writes a binary raster (nonzero -> 255) as an 8-bit grayscale PNG.
inline void save_binary_png(const std::vector<std::uint8_t>& bits, int width, int height,
                            const std::filesystem::path& path) {
  detail::RawRaster m;
  m.width = width;
  m.height = height;
  m.values.resize(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) m.values[i] = bits[i] ? 255 : 0;
  detail::write_png(path, m);
}

}  // namespace sonardn
