#pragma once

// Little-endian primitive I/O with offset-aware errors.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hive::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  std::vector<char> bytes;

  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    bytes.insert(bytes.end(), b, b + sizeof(T));
  }
  void put_f32(double v) { put(static_cast<float>(v)); }
  void put_bytes(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
};

class Reader {
 public:
  Reader(const std::vector<char>& b, std::string what) : bytes_(b), what_(std::move(what)) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  double get_f32(const char* field) { return static_cast<double>(get<float>(field)); }
  std::string get_bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* field) const;
  [[noreturn]] void fail(const std::string& msg) const;
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace hive::binio
