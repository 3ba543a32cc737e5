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

#include <fstream>
#include <sstream>
#include <system_error>

#include "binary.hpp"
#include "sfgsr/io.hpp"

namespace sfgsr {

using namespace io_detail;

namespace {

constexpr char kTensorMagic[4] = {'S', 'F', 'G', 'T'};
// Guards allocation against corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 34;

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

template <typename T>
Tensor<T> read_payload(std::istream& is, num::Shape shape) {
  Tensor<T> t(std::move(shape));
  auto d = t.data();
  // Bulk read, then decode in place from little-endian order.
  std::string raw(d.size() * sizeof(T), '\0');
  get_bytes(is, raw.data(), raw.size(), "tensor payload");
  for (std::size_t i = 0; i < d.size(); ++i) {
    bits_t<T> v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
      v |= static_cast<bits_t<T>>(static_cast<unsigned char>(raw[i * sizeof(T) + k])) << (8 * k);
    }
    d[i] = std::bit_cast<T>(v);
  }
  return t;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("tensor rank exceeds 255");
  os.write(kTensorMagic, 4);
  put_le<std::uint8_t>(os, kTensorFileVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  put_le<std::uint8_t>(os, 0);
  for (auto d : t.shape()) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  const auto d = t.data();
  std::string raw(d.size() * sizeof(T), '\0');
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto v = std::bit_cast<bits_t<T>>(d[i]);
    for (std::size_t k = 0; k < sizeof(T); ++k) {
      raw[i * sizeof(T) + k] = static_cast<char>((v >> (8 * k)) & 0xFF);
    }
  }
  os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!os) throw FormatError("write failed while writing tensor");
}

AnyTensor read_any_tensor(std::istream& is) {
  char magic[4];
  get_bytes(is, magic, 4, "tensor magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  const auto version = get_le<std::uint8_t>(is, "tensor version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  const auto dtype = get_le<std::uint8_t>(is, "tensor dtype");
  const auto ndim = get_le<std::uint8_t>(is, "tensor rank");
  get_le<std::uint8_t>(is, "tensor header");
  num::Shape shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto v = get_le<std::uint64_t>(is, "tensor dims");
    if (v > kMaxElements || (v != 0 && count > kMaxElements / v)) {
      throw FormatError("tensor extents too large");
    }
    count *= v;
    d = static_cast<std::int64_t>(v);
  }
  switch (dtype) {
    case static_cast<std::uint8_t>(DType::kF32): return read_payload<float>(is, std::move(shape));
    case static_cast<std::uint8_t>(DType::kF64): return read_payload<double>(is, std::move(shape));
    default: throw FormatError("unknown tensor dtype tag " + std::to_string(dtype));
  }
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  AnyTensor any = read_any_tensor(is);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError(std::string("tensor dtype is not ") + (sizeof(T) == 4 ? "f32" : "f64"));
}

const num::Shape& shape_of(const AnyTensor& t) {
  return std::visit([](const auto& x) -> const num::Shape& { return x.shape(); }, t);
}

template <typename T>
Tensor<T> tensor_as(const AnyTensor& t) {
  return std::visit([](const auto& x) { return x.template cast<T>(); }, t);
}

void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    try {
      writer(os);
      os.flush();
      if (!os) throw FormatError("write failed for " + tmp.string());
    } catch (...) {
      os.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw;
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw FormatError("read failed for " + path.string());
  return std::move(ss).str();
}

template <typename T>
void save_tensor_file(const fs::path& path, const Tensor<T>& t) {
  atomic_write(path, [&](std::ostream& os) { write_tensor(os, t); });
}

AnyTensor load_tensor_file(const fs::path& path) {
  std::istringstream is(read_file(path));
  AnyTensor t = read_any_tensor(is);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after tensor in " + path.string());
  }
  return t;
}

#define SFGSR_INSTANTIATE(T)                                  \
  template void write_tensor(std::ostream&, const Tensor<T>&); \
  template Tensor<T> read_tensor<T>(std::istream&);           \
  template Tensor<T> tensor_as<T>(const AnyTensor&);          \
  template void save_tensor_file(const fs::path&, const Tensor<T>&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
