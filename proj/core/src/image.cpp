#include "monoplot/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <png.h>

#include "monoplot/error.hpp"

namespace monoplot {

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage out(rgb.width, rgb.height);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double y = 0.299 * rgb.values[3 * i] + 0.587 * rgb.values[3 * i + 1] +
                     0.114 * rgb.values[3 * i + 2];
    out.values[i] = static_cast<std::uint8_t>(std::min(255.0, std::floor(y + 0.5)));
  }
  return out;
}

RgbImage to_rgb(const GrayImage& gray) {
  RgbImage out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    out.values[3 * i] = out.values[3 * i + 1] = out.values[3 * i + 2] = gray.values[i];
  }
  return out;
}

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PgmCursor {
  const std::vector<std::uint8_t>& bytes;
  const std::filesystem::path& path;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw InputError(path.string() + ": " + what + " at byte " + std::to_string(pos));
  }

  void skip_space() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("expected integer");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) fail("integer too large");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  PgmCursor cur{bytes, path};
  const bool binary = bytes[1] == '5';
  cur.pos = 2;
  const int w = cur.read_int();
  const int h = cur.read_int();
  const int maxval = cur.read_int();
  if (w <= 0 || h <= 0) cur.fail("invalid dimensions");
  if (maxval <= 0 || maxval > 255) cur.fail("unsupported maxval " + std::to_string(maxval));
  GrayImage img(w, h);
  auto rescale = [maxval](int v) {
    return static_cast<std::uint8_t>(maxval == 255 ? v : std::lround(v * 255.0 / maxval));
  };
  if (binary) {
    if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos])) cur.fail("expected whitespace");
    ++cur.pos;
    if (bytes.size() - cur.pos < img.values.size()) {
      cur.pos = bytes.size();
      cur.fail("truncated pixel data");
    }
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      const int v = bytes[cur.pos + i];
      if (v > maxval) {
        cur.pos += i;
        cur.fail("pixel value exceeds maxval");
      }
      img.values[i] = rescale(v);
    }
  } else {
    for (auto& px : img.values) {
      const int v = cur.read_int();
      if (v > maxval) cur.fail("pixel value exceeds maxval");
      px = rescale(v);
    }
  }
  return img;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw InputError(path.string() + ": invalid PNG (" + image.message + ")");
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.values.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError(path.string() + ": corrupt PNG (" + msg + ")");
  }
  return out;
}

bool is_png(const std::vector<std::uint8_t>& b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_pgm(const std::vector<std::uint8_t>& b) {
  return b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '2');
}

std::vector<std::uint8_t> encode(const std::uint8_t* data, int w, int h, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

RgbImage read_photo_rgb(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (is_png(bytes)) return decode_png(bytes, path);
  if (is_pgm(bytes)) return to_rgb(decode_pgm(bytes, path));
  throw InputError(path.string() + ": unrecognized image format at byte 0 (expected PNG or PGM)");
}

GrayImage read_photo(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (is_pgm(bytes)) return decode_pgm(bytes, path);
  if (is_png(bytes)) return to_gray(decode_png(bytes, path));
  throw InputError(path.string() + ": unrecognized image format at byte 0 (expected PNG or PGM)");
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  return encode(img.values.data(), img.width, img.height, PNG_FORMAT_GRAY);
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  return encode(img.values.data(), img.width, img.height, PNG_FORMAT_RGB);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  write_bytes(path, encode_png(img));
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  write_bytes(path, encode_png(img));
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.values.begin(), img.values.end());
  write_bytes(path, bytes);
}

}  // namespace monoplot
