#pragma once

// Little-endian primitive readers/writers for the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hitok/error.hpp"

namespace hitok::io {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path.string());
  }
  ~Writer() = default;

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void f32(double v) { put(static_cast<float>(v)); }
  void f64(double v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path.string());
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != m) throw IoError("bad magic in " + path_.string());
  }
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw IoError("truncated file: " + path_.string());
    return to_little(v);
  }
  double f32() { return static_cast<double>(get<float>()); }
  double f64() { return get<double>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::string string() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw IoError("implausible string length in " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw IoError("truncated file: " + path_.string());
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace hitok::io
