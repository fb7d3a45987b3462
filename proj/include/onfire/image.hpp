#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace onfire {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // r,g,b per pixel, row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const { return &pixels[(y * width + x) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

namespace detail {

class NetpbmReader {
 public:
  NetpbmReader(std::vector<unsigned char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  void fail(const std::string& msg) const {
    throw std::runtime_error(source_ + ": " + msg + " (byte " + std::to_string(pos_) + ")");
  }

  std::string magic() {
    if (data_.size() < 2) fail("missing magic number");
    std::string m{static_cast<char>(data_[0]), static_cast<char>(data_[1])};
    pos_ = 2;
    return m;
  }

  /// Next decimal header field, skipping whitespace and '#' comments.
  std::size_t field(const char* what) {
    for (;;) {
      if (pos_ >= data_.size()) fail(std::string("header ends before ") + what);
      const unsigned char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n' && data_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
    if (!std::isdigit(data_[pos_])) fail(std::string("expected a number for ") + what);
    std::size_t v = 0;
    while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
      v = v * 10 + (data_[pos_] - '0');
      if (v > (1u << 30)) fail(std::string(what) + " is too large");
      ++pos_;
    }
    return v;
  }

  /// Consumes the single whitespace byte that ends the header and returns the raster.
  std::vector<std::uint8_t> raster(std::size_t bytes) {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_])) fail("header must end with whitespace");
    ++pos_;
    if (data_.size() - pos_ < bytes) {
      fail("truncated payload: need " + std::to_string(bytes) + " bytes, have " +
           std::to_string(data_.size() - pos_));
    }
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + bytes));
    pos_ += bytes;
    return out;
  }

 private:
  std::vector<unsigned char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& header,
                       const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline void read_dims(NetpbmReader& r, std::size_t& w, std::size_t& h) {
  w = r.field("width");
  h = r.field("height");
  if (w == 0 || h == 0) r.fail("image has zero extent");
  const std::size_t maxval = r.field("maxval");
  if (maxval != 255) r.fail("maxval " + std::to_string(maxval) + " is not 255");
}

}  // namespace detail

inline RgbImage decode_ppm(std::vector<unsigned char> bytes, const std::string& source = "ppm") {
  detail::NetpbmReader r(std::move(bytes), source);
  if (r.magic() != "P6") r.fail("not a binary PPM (expected P6)");
  RgbImage img;
  detail::read_dims(r, img.width, img.height);
  img.pixels = r.raster(img.width * img.height * 3);
  return img;
}

inline GrayImage decode_pgm(std::vector<unsigned char> bytes, const std::string& source = "pgm") {
  detail::NetpbmReader r(std::move(bytes), source);
  if (r.magic() != "P5") r.fail("not a binary PGM (expected P5)");
  GrayImage img;
  detail::read_dims(r, img.width, img.height);
  img.pixels = r.raster(img.width * img.height);
  return img;
}

inline RgbImage load_ppm(const std::string& path) { return decode_ppm(detail::read_file(path), path); }
inline GrayImage load_pgm(const std::string& path) { return decode_pgm(detail::read_file(path), path); }

inline void save_ppm(const std::string& path, const RgbImage& img) {
  if (img.empty() || img.pixels.size() != img.width * img.height * 3) {
    throw std::invalid_argument("save_ppm: image is empty or inconsistent");
  }
  detail::write_file(path,
                     "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
                     img.pixels);
}

inline void save_pgm(const std::string& path, const GrayImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
    throw std::invalid_argument("save_pgm: image is empty or inconsistent");
  }
  detail::write_file(path,
                     "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
                     img.pixels);
}

}  // namespace onfire
