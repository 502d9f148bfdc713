#include "hive/hvol.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "hive/binio.hpp"

namespace hive {

namespace binio {

void Reader::need(std::size_t n, const char* field) const {
  if (bytes_.size() - pos_ < n)
    throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_) + " reading " + field + " (need " +
                      std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) + " left)");
}

void Reader::fail(const std::string& msg) const {
  throw FormatError(what_ + ": " + msg + " at offset " + std::to_string(pos_));
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace binio

namespace {

void header(binio::Writer& w, HvolType t, const Shape3& s, const std::array<double, 3>& sp) {
  w.put_bytes("HVOL");
  w.put<std::uint16_t>(kHvolVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t));
  for (auto d : s) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("HVOL axis too long");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (double v : sp) w.put_f32(v);
}

std::size_t width_of(HvolType t) {
  switch (t) {
    case HvolType::F32: return 4;
    case HvolType::U8: return 1;
    case HvolType::U16: return 2;
  }
  return 0;
}

void read_payload(binio::Reader& r, Hvol& h) {
  const std::size_t n = h.shape[0] * h.shape[1] * h.shape[2];
  r.need(n * width_of(h.type), "payload");
  h.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (h.type) {
      case HvolType::F32: h.values[i] = r.get_f32("payload"); break;
      case HvolType::U8: h.values[i] = r.get<std::uint8_t>("payload"); break;
      case HvolType::U16: h.values[i] = r.get<std::uint16_t>("payload"); break;
    }
  }
}

}  // namespace

Volume<double> Hvol::real() const {
  Volume<double> v(shape);
  v.data = values;
  return v;
}

Mask Hvol::mask() const {
  Mask m(shape, 0);
  for (std::size_t i = 0; i < values.size(); ++i) m[i] = values[i] != 0.0;
  return m;
}

LabelVolume Hvol::ids() const {
  LabelVolume l(shape, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v < 0.0 || v != std::floor(v) || v > 2147483647.0)
      throw FormatError("instance volume holds non-integer or negative value " + std::to_string(v));
    l[i] = static_cast<std::int32_t>(v);
  }
  return l;
}

void write_hvol(const std::string& path, const Volume<double>& v, const std::array<double, 3>& sp) {
  binio::Writer w;
  header(w, HvolType::F32, v.shape, sp);
  for (double x : v.data) w.put_f32(x);
  binio::write_file(path, w.bytes);
}

void write_hvol(const std::string& path, const Mask& v, const std::array<double, 3>& sp) {
  binio::Writer w;
  header(w, HvolType::U8, v.shape, sp);
  for (auto x : v.data) w.put<std::uint8_t>(x);
  binio::write_file(path, w.bytes);
}

void write_hvol(const std::string& path, const LabelVolume& v, const std::array<double, 3>& sp) {
  binio::Writer w;
  header(w, HvolType::U16, v.shape, sp);
  for (auto x : v.data) {
    if (x < 0 || x > 65535) throw std::invalid_argument("instance id " + std::to_string(x) + " does not fit u16");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(x));
  }
  binio::write_file(path, w.bytes);
}

Hvol read_hvol(const std::string& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  if (r.get_bytes(4, "magic") != "HVOL") r.fail("bad magic (expected HVOL)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kHvolVersion) r.fail("unsupported version " + std::to_string(version));
  const auto code = r.get<std::uint8_t>("dtype");
  if (code > 2) r.fail("unknown dtype code " + std::to_string(code));
  Hvol h;
  h.type = static_cast<HvolType>(code);
  for (auto& d : h.shape) d = r.get<std::uint32_t>("dims");
  for (auto& s : h.spacing) s = r.get_f32("spacing");
  read_payload(r, h);
  if (!r.at_end()) r.fail("trailing bytes after payload");
  return h;
}

Hvol import_raw(const std::string& path, const Shape3& shape, HvolType type, const std::array<double, 3>& sp) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  Hvol h;
  h.type = type;
  h.shape = shape;
  h.spacing = sp;
  read_payload(r, h);
  if (!r.at_end()) r.fail("raw file larger than " + shape_string(shape));
  return h;
}

}  // namespace hive
