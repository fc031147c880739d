#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>

#include "omcl/errors.hpp"

namespace omcl::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    U u;
    std::memcpy(&u, &v, sizeof(T));
    U r = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) r |= ((u >> (8 * i)) & 0xff) << (8 * (sizeof(T) - 1 - i));
    std::memcpy(&v, &r, sizeof(T));
  }
  return v;
}

// Little-endian binary writer over an ofstream.
class LeWriter {
 public:
  explicit LeWriter(std::ofstream& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    v = byteswap_if_big(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ofstream& out_;
};

class LeReader {
 public:
  LeReader(std::ifstream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    T v;
    read(&v, sizeof(T));
    return byteswap_if_big(v);
  }
  void read(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError(what_ + ": truncated file");
  }

 private:
  std::ifstream& in_;
  std::string what_;
};

}  // namespace omcl::detail
