/* Copyright (c) 2026 The sfgsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "sfgsr/errors.hpp"

namespace sfgsr::io_detail {

// Little-endian encoding independent of host byte order.
template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, sizeof(U));
}

inline void get_bytes(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char b[sizeof(U)];
  get_bytes(is, reinterpret_cast<char*>(b), sizeof(U), what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

template <typename F>
using bits_t = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;

template <typename F>
void put_float(std::ostream& os, F v) {
  put_le(os, std::bit_cast<bits_t<F>>(v));
}

template <typename F>
F get_float(std::istream& is, const char* what) {
  return std::bit_cast<F>(get_le<bits_t<F>>(is, what));
}

}  // namespace sfgsr::io_detail
