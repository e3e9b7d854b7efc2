#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bifc/data/raster.hpp"
#include "bifc/diffcore/tensor.hpp"

// Binary netpbm I/O: P6 (8-bit RGB) and P5 (8- or 16-bit gray, 16-bit
// samples big-endian as the format requires).

namespace bifc::pnm {

struct Header {
  char kind = 0;  // '5' or '6'
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

inline Error format_error(const std::string& path, std::size_t offset,
                          const std::string& what) {
  return Error(path + ": offset " + std::to_string(offset) + ": " + what);
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(path + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::string& header,
                        const std::vector<std::uint8_t>& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(path + ": cannot open for writing");
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(body.data()),
          static_cast<std::streamsize>(body.size()));
  if (!f) throw Error(path + ": write failed");
}

inline Header parse_header(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  Header h;
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw format_error(path, 0, "bad magic, expected P5 or P6");
  }
  h.kind = static_cast<char>(bytes[1]);
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1u << 24) throw format_error(path, start, std::string(what) + " too large");
      ++pos;
    }
    if (pos == start) throw format_error(path, start, std::string("expected ") + what);
    return v;
  };
  h.width = number("width");
  h.height = number("height");
  h.maxval = number("maxval");
  if (h.width == 0 || h.height == 0) throw format_error(path, pos, "zero extent");
  if (h.maxval == 0 || h.maxval > 65535) throw format_error(path, pos, "maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw format_error(path, pos, "missing whitespace after header");
  }
  h.data_offset = pos + 1;
  const std::size_t bytes_per_sample = h.maxval > 255 ? 2 : 1;
  const std::size_t channels = h.kind == '6' ? 3 : 1;
  const std::size_t need = h.width * h.height * channels * bytes_per_sample;
  if (bytes.size() - h.data_offset < need) {
    throw format_error(path, bytes.size(),
                       "truncated raster: need " + std::to_string(need) + " bytes, have " +
                           std::to_string(bytes.size() - h.data_offset));
  }
  return h;
}

inline std::string header_text(char kind, std::size_t w, std::size_t h, std::size_t maxval) {
  return std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) +
         "\n" + std::to_string(maxval) + "\n";
}

/// Writes a 3 x H x W tensor in [0, 1] as 8-bit P6.
inline void write_ppm(const std::string& path, const Tensor& rgb) {
  require_rank(rgb, 3, "write_ppm");
  if (rgb.dim(0) != 3) throw Error("write_ppm: expected 3 channels");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<std::uint8_t> body(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(c, y, x), 0.0, 1.0);
        body[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  write_bytes(path, header_text('6', w, h, 255), body);
}

inline Tensor read_ppm(const std::string& path) {
  const auto bytes = read_bytes(path);
  const Header hd = parse_header(bytes, path);
  if (hd.kind != '6') throw format_error(path, 0, "expected P6 color image");
  if (hd.maxval != 255) throw format_error(path, hd.data_offset, "expected maxval 255");
  Tensor rgb({3, hd.height, hd.width});
  const std::uint8_t* p = bytes.data() + hd.data_offset;
  for (std::size_t y = 0; y < hd.height; ++y) {
    for (std::size_t x = 0; x < hd.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        rgb.at(c, y, x) = static_cast<double>(p[(y * hd.width + x) * 3 + c]) / 255.0;
      }
    }
  }
  return rgb;
}

/// Writes raw 16-bit samples (big-endian, maxval 65535).
inline void write_pgm16(const std::string& path, const Grid<std::uint16_t>& img) {
  std::vector<std::uint8_t> body(2 * img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    body[2 * i] = static_cast<std::uint8_t>(img.values()[i] >> 8);
    body[2 * i + 1] = static_cast<std::uint8_t>(img.values()[i] & 0xff);
  }
  write_bytes(path, header_text('5', img.width(), img.height(), 65535), body);
}

inline void write_pgm8(const std::string& path, const Grid<std::uint8_t>& img,
                       std::size_t maxval = 255) {
  write_bytes(path, header_text('5', img.width(), img.height(), maxval), img.values());
}

/// Reads any P5 image; 8-bit images are widened.
inline Grid<std::uint16_t> read_pgm(const std::string& path, std::size_t* maxval = nullptr) {
  const auto bytes = read_bytes(path);
  const Header hd = parse_header(bytes, path);
  if (hd.kind != '5') throw format_error(path, 0, "expected P5 gray image");
  if (maxval) *maxval = hd.maxval;
  Grid<std::uint16_t> img(hd.height, hd.width);
  const std::uint8_t* p = bytes.data() + hd.data_offset;
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.values()[i] = hd.maxval > 255
                          ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1])
                          : p[i];
  }
  return img;
}

}  // namespace bifc::pnm
