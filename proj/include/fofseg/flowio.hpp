#ifndef FOFSEG_FLOWIO_HPP
#define FOFSEG_FLOWIO_HPP

// Reading and writing of flow fields (.flo), color frames (PPM P6),
// label masks and probability maps (PGM P5) and raw float32 grids.
// All multi-byte values are little-endian regardless of host order.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "fofseg/error.hpp"
#include "fofseg/grid.hpp"

namespace fofseg {

using Bytes = std::vector<std::uint8_t>;

struct FlowField {
  Grid<float> u;
  Grid<float> v;

  FlowField() = default;
  FlowField(int width, int height) : u(width, height, 0.0f), v(width, height, 0.0f) {}

  int width() const noexcept { return u.width(); }
  int height() const noexcept { return u.height(); }

  bool operator==(const FlowField&) const = default;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

using ColorFrame = Grid<Rgb>;

/// Per-pixel component labels; 0 is background by convention.
using LabelMask = Grid<std::uint8_t>;

using ProbabilityMap = Grid<double>;

inline constexpr float kFloMagic = 202021.25f;
inline constexpr int kMaxDimension = 100000;

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t value) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xffu));
  }
}

inline void put_f32(Bytes& out, float value) { put_u32(out, std::bit_cast<std::uint32_t>(value)); }

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    value |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  }
  return value;
}

inline float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

inline void check_dimensions(std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0 || width > kMaxDimension || height > kMaxDimension) {
    throw Error(Errc::dimension_overflow,
                "dimensions " + std::to_string(width) + "x" + std::to_string(height));
  }
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_failure, "cannot open " + path.string());
  }
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(Errc::io_failure, "short write to " + path.string());
  }
}

// Netpbm header: magic, width, height, maxval, then exactly one whitespace byte.
struct NetpbmHeader {
  int width = 0;
  int height = 0;
  std::size_t payload_offset = 0;
};

inline NetpbmHeader parse_netpbm_header(std::span<const std::uint8_t> in, const char* magic) {
  if (in.size() < 2 || in[0] != static_cast<std::uint8_t>(magic[0]) ||
      in[1] != static_cast<std::uint8_t>(magic[1])) {
    throw Error(Errc::unsupported_format, std::string("expected ") + magic + " netpbm data");
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < in.size()) {
      if (in[pos] == '#') {
        while (pos < in.size() && in[pos] != '\n') ++pos;
      } else if (std::isspace(in[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::int64_t {
    skip_space();
    if (pos >= in.size()) throw Error(Errc::truncated, "netpbm header ends early");
    if (!std::isdigit(in[pos])) throw Error(Errc::unsupported_format, "malformed netpbm header");
    std::int64_t value = 0;
    while (pos < in.size() && std::isdigit(in[pos])) {
      value = value * 10 + (in[pos] - '0');
      if (value > 10 * static_cast<std::int64_t>(kMaxDimension)) {
        throw Error(Errc::dimension_overflow, "netpbm header value too large");
      }
      ++pos;
    }
    return value;
  };
  const std::int64_t width = read_int();
  const std::int64_t height = read_int();
  const std::int64_t maxval = read_int();
  check_dimensions(width, height);
  if (maxval != 255) {
    throw Error(Errc::unsupported_format, "only 8-bit netpbm (maxval 255) is supported");
  }
  if (pos >= in.size() || !std::isspace(in[pos])) {
    throw Error(Errc::truncated, "netpbm header ends early");
  }
  ++pos;
  return {static_cast<int>(width), static_cast<int>(height), pos};
}

inline Bytes netpbm_header(const char* magic, int width, int height) {
  const std::string header =
      std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  return Bytes(header.begin(), header.end());
}

}  // namespace detail

inline void check_finite(const FlowField& field) {
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    if (!std::isfinite(field.u[i]) || !std::isfinite(field.v[i])) {
      throw Error(Errc::non_finite, "flow value at index " + std::to_string(i) + " is not finite");
    }
  }
}

// ---- .flo -----------------------------------------------------------------

inline Bytes encode_flo(const FlowField& field) {
  detail::check_dimensions(field.width(), field.height());
  check_finite(field);
  Bytes out;
  out.reserve(12 + field.u.size() * 8);
  detail::put_f32(out, kFloMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(field.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(field.height()));
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    detail::put_f32(out, field.u[i]);
    detail::put_f32(out, field.v[i]);
  }
  return out;
}

inline FlowField decode_flo(std::span<const std::uint8_t> in) {
  if (in.size() < 4) throw Error(Errc::truncated, "missing .flo magic");
  if (detail::get_f32(in, 0) != kFloMagic) throw Error(Errc::bad_magic, "not a .flo file");
  if (in.size() < 12) throw Error(Errc::truncated, "missing .flo dimensions");
  const auto width = static_cast<std::int32_t>(detail::get_u32(in, 4));
  const auto height = static_cast<std::int32_t>(detail::get_u32(in, 8));
  detail::check_dimensions(width, height);
  FlowField field(width, height);
  const std::size_t count = field.u.size();
  if (in.size() < 12 + count * 8) {
    throw Error(Errc::truncated, "expected " + std::to_string(count * 2) + " floats");
  }
  for (std::size_t i = 0; i < count; ++i) {
    field.u[i] = detail::get_f32(in, 12 + 8 * i);
    field.v[i] = detail::get_f32(in, 16 + 8 * i);
  }
  check_finite(field);
  return field;
}

inline FlowField read_flo(const std::filesystem::path& path) {
  return decode_flo(detail::read_file(path));
}

inline void write_flo(const FlowField& field, const std::filesystem::path& path) {
  detail::write_file(path, encode_flo(field));
}

// ---- PPM / PGM ------------------------------------------------------------

inline Bytes encode_ppm(const ColorFrame& frame) {
  detail::check_dimensions(frame.width(), frame.height());
  Bytes out = detail::netpbm_header("P6", frame.width(), frame.height());
  out.reserve(out.size() + frame.size() * 3);
  for (const Rgb& c : frame) {
    out.push_back(c.r);
    out.push_back(c.g);
    out.push_back(c.b);
  }
  return out;
}

inline ColorFrame decode_ppm(std::span<const std::uint8_t> in) {
  const auto header = detail::parse_netpbm_header(in, "P6");
  ColorFrame frame(header.width, header.height);
  if (in.size() < header.payload_offset + frame.size() * 3) {
    throw Error(Errc::truncated, "P6 payload too short");
  }
  const auto* p = in.data() + header.payload_offset;
  for (Rgb& c : frame) {
    c = {p[0], p[1], p[2]};
    p += 3;
  }
  return frame;
}

inline Bytes encode_pgm(const Grid<std::uint8_t>& image) {
  detail::check_dimensions(image.width(), image.height());
  Bytes out = detail::netpbm_header("P5", image.width(), image.height());
  out.insert(out.end(), image.begin(), image.end());
  return out;
}

inline Grid<std::uint8_t> decode_pgm(std::span<const std::uint8_t> in) {
  const auto header = detail::parse_netpbm_header(in, "P5");
  Grid<std::uint8_t> image(header.width, header.height);
  if (in.size() < header.payload_offset + image.size()) {
    throw Error(Errc::truncated, "P5 payload too short");
  }
  std::memcpy(image.values().data(), in.data() + header.payload_offset, image.size());
  return image;
}

inline ColorFrame read_image(const std::filesystem::path& path) {
  return decode_ppm(detail::read_file(path));
}

inline void write_image(const ColorFrame& frame, const std::filesystem::path& path) {
  detail::write_file(path, encode_ppm(frame));
}

inline LabelMask read_mask(const std::filesystem::path& path) {
  return decode_pgm(detail::read_file(path));
}

inline void write_mask(const LabelMask& mask, const std::filesystem::path& path) {
  detail::write_file(path, encode_pgm(mask));
}

/// Round-half-up quantization of a probability to one byte.
inline std::uint8_t quantize_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(Errc::invalid_argument, "probability outside [0,1]");
  }
  return static_cast<std::uint8_t>(std::floor(p * 255.0 + 0.5));
}

inline Grid<std::uint8_t> quantize_probabilities(const ProbabilityMap& map) {
  Grid<std::uint8_t> out(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = quantize_probability(map[i]);
  return out;
}

inline void write_probability_map(const ProbabilityMap& map, const std::filesystem::path& path) {
  write_mask(quantize_probabilities(map), path);
}

// ---- raw float32 grid -----------------------------------------------------
// int32 width, int32 height, then row-major float32 values.

inline Bytes encode_float_grid(const Grid<double>& grid) {
  detail::check_dimensions(grid.width(), grid.height());
  Bytes out;
  out.reserve(8 + grid.size() * 4);
  detail::put_u32(out, static_cast<std::uint32_t>(grid.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(grid.height()));
  for (double value : grid) detail::put_f32(out, static_cast<float>(value));
  return out;
}

inline Grid<double> decode_float_grid(std::span<const std::uint8_t> in) {
  if (in.size() < 8) throw Error(Errc::truncated, "missing float grid header");
  const auto width = static_cast<std::int32_t>(detail::get_u32(in, 0));
  const auto height = static_cast<std::int32_t>(detail::get_u32(in, 4));
  detail::check_dimensions(width, height);
  Grid<double> grid(width, height);
  if (in.size() < 8 + grid.size() * 4) throw Error(Errc::truncated, "float grid payload too short");
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = detail::get_f32(in, 8 + 4 * i);
  return grid;
}

inline void write_float_grid(const Grid<double>& grid, const std::filesystem::path& path) {
  detail::write_file(path, encode_float_grid(grid));
}

inline Grid<double> read_float_grid(const std::filesystem::path& path) {
  return decode_float_grid(detail::read_file(path));
}

}  // namespace fofseg

#endif  // FOFSEG_FLOWIO_HPP
