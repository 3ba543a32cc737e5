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

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "sfgsr/io.hpp"
#include "test_util.hpp"

using namespace sfgsr;
using num::Rng;
using testing::bitwise_equal;
using testing::random_shape;
using testing::random_special;

namespace {

std::string bytes_of(const std::function<void(std::ostream&)>& w) {
  std::ostringstream os;
  w(os);
  return os.str();
}

}  // namespace

TEST_CASE("tensor file: byte layout of a small f32 tensor") {
  const Tensor<float> t({2}, std::vector<float>{1.0f, -2.0f});
  const std::string b = bytes_of([&](std::ostream& os) { write_tensor(os, t); });
  const std::string expected("SFGT\x01\x01\x01\x00"
                             "\x02\x00\x00\x00\x00\x00\x00\x00"
                             "\x00\x00\x80\x3f"
                             "\x00\x00\x00\xc0",
                             24);
  CHECK(b == expected);
  const Tensor<double> d({1, 1}, std::vector<double>{0.5});
  const std::string bd = bytes_of([&](std::ostream& os) { write_tensor(os, d); });
  CHECK(bd.size() == 8 + 16 + 8);
  CHECK(bd[5] == 2);
  CHECK(bd[6] == 2);
  CHECK(bd.substr(24) == std::string("\x00\x00\x00\x00\x00\x00\xe0\x3f", 8));
}

TEST_CASE("tensor file: 1000 randomized round trips are bitwise lossless") {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto shape = random_shape(rng);
    const bool f32 = rng.below(2) == 0;
    std::string b;
    if (f32) {
      const auto t = random_special<float>(shape, rng);
      b = bytes_of([&](std::ostream& os) { write_tensor(os, t); });
      std::istringstream is(b);
      const auto back = read_tensor<float>(is);
      REQUIRE(bitwise_equal(t, back));
      CHECK(b.size() == 8 + 8 * shape.size() + 4 * t.size());
    } else {
      const auto t = random_special<double>(shape, rng);
      b = bytes_of([&](std::ostream& os) { write_tensor(os, t); });
      std::istringstream is(b);
      const auto back = read_tensor<double>(is);
      REQUIRE(bitwise_equal(t, back));
      CHECK(b.size() == 8 + 8 * shape.size() + 8 * t.size());
    }
    // Re-encoding the decoded value reproduces the bytes.
    std::istringstream is(b);
    const AnyTensor any = read_any_tensor(is);
    const std::string again =
        bytes_of([&](std::ostream& os) { std::visit([&](const auto& t) { write_tensor(os, t); }, any); });
    REQUIRE(again == b);
  }
}

TEST_CASE("tensor file: malformed input raises FormatError") {
  const Tensor<double> t({2, 3}, 1.5);
  const std::string b = bytes_of([&](std::ostream& os) { write_tensor(os, t); });
  for (std::size_t cut = 0; cut < b.size(); ++cut) {
    std::istringstream is(b.substr(0, cut));
    CHECK_THROWS_AS(read_any_tensor(is), FormatError);
  }
  auto corrupt = [&](std::size_t at, char v) {
    std::string c = b;
    c[at] = v;
    std::istringstream is(c);
    return is;
  };
  auto bad_magic = corrupt(0, 'X');
  CHECK_THROWS_AS(read_any_tensor(bad_magic), FormatError);
  auto bad_version = corrupt(4, 2);
  CHECK_THROWS_AS(read_any_tensor(bad_version), FormatError);
  auto bad_dtype = corrupt(5, 9);
  CHECK_THROWS_AS(read_any_tensor(bad_dtype), FormatError);
  std::istringstream wrong_type(b);
  CHECK_THROWS_AS(read_tensor<float>(wrong_type), FormatError);
}

TEST_CASE("checkpoint: 1000 randomized round trips are bitwise lossless") {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    Checkpoint c;
    c.config_text = "seed = " + std::to_string(rng.below(1000)) + "\n";
    const auto n = rng.below(5);
    for (std::uint64_t k = 0; k < n; ++k) {
      std::string name = "p" + std::to_string(rng.below(50)) + ".w";
      if (rng.below(2)) {
        c.entries.emplace(name, random_special<float>(random_shape(rng, 3), rng));
      } else {
        c.entries.emplace(name, random_special<double>(random_shape(rng, 3), rng));
      }
    }
    const std::string b = bytes_of([&](std::ostream& os) { write_checkpoint(os, c); });
    std::istringstream is(b);
    const Checkpoint back = read_checkpoint(is);
    REQUIRE(back.config_text == c.config_text);
    REQUIRE(back.entries.size() == c.entries.size());
    for (const auto& [name, t] : c.entries) {
      const auto& u = back.entries.at(name);
      REQUIRE(t.index() == u.index());
      if (t.index() == 0) {
        REQUIRE(bitwise_equal(std::get<0>(t), std::get<0>(u)));
      } else {
        REQUIRE(bitwise_equal(std::get<1>(t), std::get<1>(u)));
      }
    }
    REQUIRE(bytes_of([&](std::ostream& os) { write_checkpoint(os, back); }) == b);
  }
}

TEST_CASE("checkpoint: layout, sorted names, unsorted input rejected") {
  Checkpoint c;
  c.config_text = "scale = 2\n";
  c.entries.emplace("b", Tensor<float>({1}, 2.0f));
  c.entries.emplace("a", Tensor<float>({1}, 1.0f));
  const std::string b = bytes_of([&](std::ostream& os) { write_checkpoint(os, c); });
  CHECK(b.substr(0, 4) == "SFGC");
  CHECK(b.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
  CHECK(b.substr(8, 4) == std::string("\x0a\x00\x00\x00", 4));
  CHECK(b.substr(12, 10) == "scale = 2\n");
  CHECK(b.substr(22, 4) == std::string("\x02\x00\x00\x00", 4));
  CHECK(b.substr(26, 3) == std::string("\x01\x00" "a", 3));
  // Each entry is 2 + 1 name bytes + 16 tensor bytes; swap the two records.
  const std::size_t rec = 3 + 16;
  std::string swapped = b.substr(0, 26) + b.substr(26 + rec, rec) + b.substr(26, rec);
  std::istringstream is(swapped);
  CHECK_THROWS_AS(read_checkpoint(is), FormatError);
  for (std::size_t cut = 0; cut < b.size(); ++cut) {
    std::istringstream t(b.substr(0, cut));
    CHECK_THROWS_AS(read_checkpoint(t), FormatError);
  }
}

TEST_CASE("checkpoint: model round trip reconstructs config and parameters") {
  auto cfg = ModelConfig::tiny();
  cfg.seed = 9;
  const auto m = build_model<float>(cfg);
  const Checkpoint c = model_checkpoint(m);
  CHECK(checkpoint_config(c) == cfg);
  const auto back = model_from_checkpoint<float>(c);
  std::size_t n = 0;
  back.for_each_parameter([&](const std::string& name, const Parameter<float>& p) {
    CHECK(bitwise_equal(p.value, std::get<Tensor<float>>(c.entries.at(name))));
    ++n;
  });
  CHECK(n == c.entries.size());
  // Optimizer entries are ignored by the model loader.
  Checkpoint with_optim = c;
  with_optim.entries.emplace("optim.step", Tensor<double>({2}, 0.0));
  CHECK_NOTHROW(model_from_checkpoint<float>(with_optim));
}

TEST_CASE("checkpoint: loader lists every missing and unknown name") {
  const auto m = build_model<float>(ModelConfig::tiny());
  Checkpoint c = model_checkpoint(m);
  c.entries.erase("norm.weight");
  c.entries.erase("head.last.bias");
  c.entries.emplace("stages.9.conv.weight", Tensor<float>({1}));
  c.entries.emplace("extra", Tensor<float>({1}));
  std::string message;
  try {
    (void)model_from_checkpoint<float>(c);
  } catch (const FormatError& e) {
    message = e.what();
  }
  CHECK(message.find("missing: norm.weight") != std::string::npos);
  CHECK(message.find("missing: head.last.bias") != std::string::npos);
  CHECK(message.find("unknown: stages.9.conv.weight") != std::string::npos);
  CHECK(message.find("unknown: extra") != std::string::npos);
  Checkpoint wrong = model_checkpoint(m);
  wrong.entries.at("norm.weight") = Tensor<float>({3});
  CHECK_THROWS_AS(model_from_checkpoint<float>(wrong), FormatError);
}

TEST_CASE("ppm: header parsing, scaling, round-half-up") {
  const std::string file = std::string("P6\n# note\n2 1\n255\n") + std::string("\x00\x80\xff\x01\x02\x03", 6);
  const auto img = decode_ppm(file);
  REQUIRE(img.shape() == num::Shape{3, 1, 2});
  CHECK(img.at({0, 0, 0}) == 0.0f);
  CHECK(img.at({1, 0, 0}) == static_cast<float>(128 / 255.0));
  CHECK(img.at({2, 0, 0}) == 1.0f);
  CHECK(img.at({0, 0, 1}) == static_cast<float>(1 / 255.0));
  CHECK(encode_ppm(img) == "P6\n2 1\n255\n" + file.substr(file.size() - 6));
  // 0.5/255 lies exactly halfway: rounds up. Out-of-range values clamp.
  Tensor<float> t({3, 1, 1}, std::vector<float>{0.5f / 255.0f, -3.0f, 7.0f});
  const std::string e = encode_ppm(t);
  CHECK(static_cast<unsigned char>(e[e.size() - 3]) == 1);
  CHECK(static_cast<unsigned char>(e[e.size() - 2]) == 0);
  CHECK(static_cast<unsigned char>(e[e.size() - 1]) == 255);
}

TEST_CASE("ppm: 1000 randomized 8-bit images round trip bytewise") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto w = 1 + rng.below(7), h = 1 + rng.below(7);
    std::string raster(3 * w * h, '\0');
    for (auto& c : raster) c = static_cast<char>(rng.below(256));
    const std::string file = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n" + raster;
    REQUIRE(encode_ppm(decode_ppm(file)) == file);
  }
}

TEST_CASE("ppm: malformed files raise FormatError") {
  const std::string good = std::string("P6\n2 2\n255\n") + std::string(12, '\x10');
  CHECK_NOTHROW(decode_ppm(good));
  CHECK_THROWS_AS(decode_ppm(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n1 2 3"), FormatError);
  CHECK_THROWS_AS(decode_ppm(std::string("P6\n1 1\n65535\n") + std::string(6, '\0')), FormatError);
  CHECK_THROWS_AS(decode_ppm("P6\n"), FormatError);
  CHECK_THROWS_AS(encode_ppm(Tensor<float>({4, 2, 2})), ShapeError);
}

TEST_CASE("files: atomic writes, ppm and tensor images with band notes") {
  const fs::path dir = fs::temp_directory_path() / "sfgsr_test_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto rgb = testing::random_tensor<float>({3, 4, 5}, 3, 0, 1);
  save_image(dir / "a.ppm", rgb);
  const auto back = load_image(dir / "a.ppm");
  REQUIRE(back.shape() == rgb.shape());
  for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(std::abs(back[i] - rgb[i]) <= 0.5f / 255.0f + 1e-7f);
  const auto four = testing::random_tensor<float>({4, 3, 3}, 4, 0, 1);
  save_image(dir / "b.sfgt", four);
  CHECK(bitwise_equal(load_image(dir / "b.sfgt"), four));
  CHECK(read_file(dir / "b.sfgt.bands") == "bands = 4\n");
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");
  // A failing writer leaves neither the target nor a temp file behind.
  CHECK_THROWS(atomic_write(dir / "c.bin", [](std::ostream&) { throw FormatError("boom"); }));
  CHECK(!fs::exists(dir / "c.bin"));
  CHECK(!fs::exists(dir / "c.bin.tmp"));
  CHECK_THROWS_AS(read_file(dir / "missing"), FormatError);
  fs::remove_all(dir);
}
