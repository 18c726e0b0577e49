#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "dgseg/error.hpp"
#include "dgseg/nn/tensor.hpp"

namespace dgseg::nn {

// Little-endian host assumed; the checkpoint header records the format
// version so a future big-endian port can refuse old files.

template <class T>
  requires std::is_trivially_copyable_v<T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
  requires std::is_trivially_copyable_v<T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("unexpected end of binary stream");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint64_t max_len = 1u << 24) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > max_len) throw DataError("string length out of range in binary stream");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("unexpected end of binary stream");
  return s;
}

inline void write_tensor_data(std::ostream& out, const Tensor& t) {
  write_pod<std::uint64_t>(out, t.size());
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

/// Reads into an already-shaped tensor; the stored element count must match.
inline void read_tensor_data(std::istream& in, Tensor& t) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n != t.size())
    throw DataError("tensor size mismatch: stored " + std::to_string(n) + ", expected " + std::to_string(t.size()));
  if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * sizeof(float))))
    throw DataError("unexpected end of binary stream");
}

}  // namespace dgseg::nn
