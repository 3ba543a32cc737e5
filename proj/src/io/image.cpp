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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "sfgsr/io.hpp"

namespace sfgsr {

namespace {

// Skips whitespace and '#' comments between header tokens.
void skip_separators(const std::string& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

std::int64_t header_int(const std::string& b, std::size_t& pos, const char* what) {
  skip_separators(b, pos);
  std::int64_t v = 0;
  std::size_t digits = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos])) && digits < 10) {
    v = v * 10 + (b[pos++] - '0');
    ++digits;
  }
  if (digits == 0) throw FormatError(std::string("PPM header: missing ") + what);
  return v;
}

}  // namespace

Tensor<float> decode_ppm(const std::string& b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '6') throw FormatError("not a binary PPM (P6)");
  std::size_t pos = 2;
  const auto w = header_int(b, pos, "width");
  const auto h = header_int(b, pos, "height");
  const auto maxval = header_int(b, pos, "maxval");
  if (w < 1 || h < 1) throw FormatError("PPM header: empty image");
  if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    throw FormatError("PPM header: missing separator before raster");
  }
  ++pos;
  const auto n = static_cast<std::size_t>(w * h);
  if (b.size() - pos < 3 * n) {
    throw FormatError("truncated PPM raster: need " + std::to_string(3 * n) + " bytes, have " +
                      std::to_string(b.size() - pos));
  }
  Tensor<float> img({3, h, w});
  auto d = img.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      d[c * n + i] = static_cast<float>(static_cast<unsigned char>(b[pos + 3 * i + c]) / 255.0);
    }
  }
  return img;
}

std::string encode_ppm(const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ShapeError("PPM needs a [3, H, W] image, got " + num::to_string(img.shape()));
  }
  const auto h = img.dim(1), w = img.dim(2);
  const auto n = static_cast<std::size_t>(h * w);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const auto header = out.size();
  out.resize(header + 3 * n);
  const auto d = img.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(d[c * n + i]), 0.0, 1.0);
      out[header + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
    }
  }
  return out;
}

bool is_ppm_path(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm";
}

Tensor<float> load_image(const fs::path& path) {
  if (is_ppm_path(path)) return decode_ppm(read_file(path));
  Tensor<float> t = tensor_as<float>(load_tensor_file(path));
  if (t.rank() != 3) throw FormatError("image tensor must be [b, H, W] in " + path.string());
  return t;
}

void save_image(const fs::path& path, const Tensor<float>& image) {
  if (is_ppm_path(path)) {
    const std::string bytes = encode_ppm(image);
    atomic_write(path, [&](std::ostream& os) { os.write(bytes.data(), std::streamsize(bytes.size())); });
    return;
  }
  if (image.rank() != 3) throw ShapeError("image must be [b, H, W]");
  save_tensor_file(path, image);
  fs::path note = path;
  note += ".bands";
  atomic_write(note, [&](std::ostream& os) { os << "bands = " << image.dim(0) << "\n"; });
}

}  // namespace sfgsr
