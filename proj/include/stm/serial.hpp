#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stm {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

struct BinWriter {
  std::ofstream f;

  explicit BinWriter(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
  }
  void bytes(const void* p, size_t n) { f.write((const char*)p, (std::streamsize)n); }
  template <typename T>
  void pod(T v) { bytes(&v, sizeof v); }
  template <typename T>
  void array(const T* p, size_t n) { bytes(p, n * sizeof(T)); }
  void magic(const char m[4]) { bytes(m, 4); }
  void close() {
    f.close();
    if (!f) throw std::runtime_error("write failed");
  }
};

struct BinReader {
  std::ifstream f;
  std::string path;

  explicit BinReader(const std::string& p) : f(p, std::ios::binary), path(p) {
    if (!f) throw std::runtime_error("cannot open: " + p);
  }
  void bytes(void* p, size_t n) {
    f.read((char*)p, (std::streamsize)n);
    if ((size_t)f.gcount() != n) throw std::runtime_error("truncated file: " + path);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  template <typename T>
  void array(T* p, size_t n) { bytes(p, n * sizeof(T)); }
  void expect_magic(const char m[4]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw std::runtime_error("bad magic in " + path + " (want " + std::string(m, 4) + ")");
  }
};

}  // namespace stm
