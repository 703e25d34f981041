#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace monoplot {

/// Row-major 8-bit single-channel image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int col, int row) { return values[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int col, int row) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }

  bool operator==(const GrayImage&) const = default;
};

/// Row-major interleaved 8-bit RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 3 * width * height

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* pixel(int col, int row) {
    return values.data() + (static_cast<std::size_t>(row) * width + col) * 3;
  }
  const std::uint8_t* pixel(int col, int row) const {
    return values.data() + (static_cast<std::size_t>(row) * width + col) * 3;
  }

  bool operator==(const RgbImage&) const = default;
};

/// Luma conversion round(0.299 R + 0.587 G + 0.114 B).
GrayImage to_gray(const RgbImage& rgb);
RgbImage to_rgb(const GrayImage& gray);

// PNG (gray, gray+alpha, RGB, RGBA, palette) and binary/ASCII PGM are accepted.
// RGB input is converted to luma. Throws InputError naming the file on failure.
RgbImage read_photo_rgb(const std::filesystem::path& path);
GrayImage read_photo(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const GrayImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

}  // namespace monoplot
