#pragma once

// HVOL: "HVOL" magic, u16 version, u8 dtype (0 f32, 1 u8, 2 u16), u32 D, H, W,
// three f32 spacings, then the raw little-endian payload with W innermost.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "hive/metrics.hpp"

namespace hive {

enum class HvolType : std::uint8_t { F32 = 0, U8 = 1, U16 = 2 };

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Hvol {
  HvolType type = HvolType::F32;
  Shape3 shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<double> values;  // exact for every dtype

  Volume<double> real() const;
  Mask mask() const;  // nonzero -> 1
  LabelVolume ids() const;
};

constexpr std::uint16_t kHvolVersion = 1;

void write_hvol(const std::string& path, const Volume<double>& v, const std::array<double, 3>& spacing = {1, 1, 1});
void write_hvol(const std::string& path, const Mask& v, const std::array<double, 3>& spacing = {1, 1, 1});
/// Instance ids must fit in 16 bits.
void write_hvol(const std::string& path, const LabelVolume& v, const std::array<double, 3>& spacing = {1, 1, 1});

Hvol read_hvol(const std::string& path);

/// Raw little-endian dump of known shape and type, e.g. exported EM stacks.
Hvol import_raw(const std::string& path, const Shape3& shape, HvolType type,
                const std::array<double, 3>& spacing = {1, 1, 1});

}  // namespace hive
