#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rmbench/errors.hpp"

namespace rmbench {

// Minimal binary serialization, native little-endian doubles so float
// payloads round-trip bit-exactly.
class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path) : path_(path.string()) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open for writing: " + path_);
  }

  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void i32(std::int32_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void f64_vec(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }

  void i32_vec(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_);
  }
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path) : path_(path.string()) {
    in_.open(path, std::ios::binary);
    if (!in_) throw IoError("cannot open for reading: " + path_);
  }

  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof(v)); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof(v)); return v; }
  std::int32_t i32() { std::int32_t v; raw(&v, sizeof(v)); return v; }
  double f64() { double v; raw(&v, sizeof(v)); return v; }

  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw IoError("corrupt string length in " + path_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  std::vector<double> f64_vec() {
    const std::uint64_t n = u64();
    if (n > (1ull << 32)) throw IoError("corrupt vector length in " + path_);
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }

  std::vector<int> i32_vec() {
    const std::uint64_t n = u64();
    if (n > (1ull << 32)) throw IoError("corrupt vector length in " + path_);
    std::vector<int> v(n);
    for (auto& x : v) x = i32();
    return v;
  }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("unexpected end of file: " + path_);
  }
  std::string path_;
  std::ifstream in_;
};

}  // namespace rmbench
