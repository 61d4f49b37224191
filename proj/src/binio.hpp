#pragma once

// Little-endian stream helpers shared by the binary containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "chc/error.hpp"

namespace chc::binio {

static_assert(std::endian::native == std::endian::little,
              "containers are written in native order; big-endian hosts need swapping");

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open for writing: " + path);
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes(&value, sizeof(T));
  }
  template <class T>
  void array(std::span<const T> values) {
    bytes(values.data(), values.size_bytes());
  }
  void string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw Error("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open: " + path);
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated file: " + path_);
  }
  template <class T>
  T get() {
    T value;
    bytes(&value, sizeof(T));
    return value;
  }
  template <class T>
  std::vector<T> array(std::size_t n) {
    std::vector<T> values(n);
    bytes(values.data(), n * sizeof(T));
    return values;
  }
  std::string string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 26)) throw FormatError("implausible string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_magic(const char* magic) {
    const std::size_t n = std::strlen(magic);
    std::string got(n, '\0');
    bytes(got.data(), n);
    if (got != magic) throw FormatError(path_ + ": expected magic " + magic);
  }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace chc::binio
