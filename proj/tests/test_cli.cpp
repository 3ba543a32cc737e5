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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "sfgsr/io.hpp"
#include "sfgsr/trainer.hpp"

using namespace sfgsr;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result sfgsr_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sfgsr");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("sfgsr_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_scene(const fs::path& path, std::int64_t bands, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  fs::create_directories(path.parent_path());
  save_image(path, synthetic_scene<float>(bands, h, w, seed));
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::istringstream is(read_file(p));
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("cli: usage errors exit 1, help exits 0") {
  CHECK(sfgsr_cli({}).code == cli::kExitUsage);
  CHECK(sfgsr_cli({"nonsense"}).code == cli::kExitUsage);
  CHECK(sfgsr_cli({"degrade", "--in", "x"}).code == cli::kExitUsage);
  const auto help = sfgsr_cli({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(help.out.find("degrade") != std::string::npos);
}

TEST_CASE("cli degrade: halves extents, writes metadata, is reproducible") {
  const auto d = scratch("degrade");
  write_scene(d / "hr" / "a.ppm", 3, 128, 128, 1);
  auto r = sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "lr").string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto lr = load_image(d / "lr" / "a.ppm");
  CHECK(lr.shape() == num::Shape{3, 64, 64});
  const auto meta = KeyValues::parse(read_file(d / "lr" / "a.ppm.meta"));
  CHECK(meta.get("source") == "a.ppm");
  CHECK(meta.get("lr_size") == "3,64,64");
  CHECK(meta.get_int("scale") == 2);
  const std::vector<std::string> args{"--noise-sigma", "0", "--seed", "7"};
  auto run_to = [&](const std::string& out) {
    std::vector<std::string> a{"degrade", "--in", (d / "hr").string(), "--out", (d / out).string()};
    a.insert(a.end(), args.begin(), args.end());
    return sfgsr_cli(a).code;
  };
  REQUIRE(run_to("o1") == cli::kExitOk);
  REQUIRE(run_to("o2") == cli::kExitOk);
  CHECK(read_file(d / "o1" / "a.ppm") == read_file(d / "o2" / "a.ppm"));
  CHECK(read_file(d / "o1" / "a.ppm.meta") == read_file(d / "o2" / "a.ppm.meta"));
  // Noise stream depends on the seed.
  r = sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "o3").string(), "--seed", "8"});
  CHECK(read_file(d / "o3" / "a.ppm") != read_file(d / "lr" / "a.ppm"));
  fs::remove_all(d);
}

TEST_CASE("cli degrade: truncated input gives exit 2, the rest is processed") {
  const auto d = scratch("degrade_partial");
  write_scene(d / "hr" / "good.ppm", 3, 32, 32, 2);
  write_scene(d / "hr" / "four.sfgt", 4, 32, 32, 3);
  const std::string full = read_file(d / "hr" / "good.ppm");
  std::ofstream(d / "hr" / "bad.ppm", std::ios::binary) << full.substr(0, full.size() / 2);
  const auto r = sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "lr").string()});
  CHECK(r.code == cli::kExitPartial);
  CHECK(r.err.find("bad.ppm") != std::string::npos);
  CHECK(fs::exists(d / "lr" / "good.ppm"));
  CHECK(load_image(d / "lr" / "four.sfgt").shape() == num::Shape{4, 16, 16});
  CHECK(read_file(d / "lr" / "four.sfgt.bands") == "bands = 4\n");
  CHECK(!fs::exists(d / "lr" / "bad.ppm"));
  CHECK(sfgsr_cli({"degrade", "--in", (d / "missing").string(), "--out", (d / "x").string()}).code ==
        cli::kExitUsage);
  CHECK(sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "x").string(), "--blur-size", "4"})
            .code == cli::kExitUsage);
  fs::remove_all(d);
}

TEST_CASE("cli degrade: worker count does not change outputs") {
  const auto d = scratch("threads");
  for (int i = 0; i < 4; ++i) write_scene(d / "hr" / ("s" + std::to_string(i) + ".ppm"), 3, 32, 32, 10 + i);
  setenv("SFG_THREADS", "1", 1);
  CHECK(cli::worker_count() == 1);
  REQUIRE(sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "a").string()}).code == 0);
  setenv("SFG_THREADS", "3", 1);
  CHECK(cli::worker_count() == 3);
  REQUIRE(sfgsr_cli({"degrade", "--in", (d / "hr").string(), "--out", (d / "b").string()}).code == 0);
  unsetenv("SFG_THREADS");
  CHECK(cli::worker_count() >= 1);
  for (int i = 0; i < 4; ++i) {
    const std::string n = "s" + std::to_string(i) + ".ppm";
    CHECK(read_file(d / "a" / n) == read_file(d / "b" / n));
  }
  fs::remove_all(d);
}

TEST_CASE("cli report: full-size counts, tiny ledger, invalid configs") {
  auto r = sfgsr_cli({"report", "--json"});
  REQUIRE(r.code == cli::kExitOk);
  auto j = nlohmann::json::parse(r.out);
  CHECK(std::abs(j["params"].get<double>() / 13.73e6 - 1.0) <= 0.05);
  CHECK(std::abs(j["gflops"].get<double>() / 117.23 - 1.0) <= 0.10);
  r = sfgsr_cli({"report", "--preset", "full-baseline", "--json"});
  j = nlohmann::json::parse(r.out);
  CHECK(std::abs(j["params"].get<double>() / 12.09e6 - 1.0) <= 0.05);
  CHECK(std::abs(j["gflops"].get<double>() / 104.06 - 1.0) <= 0.10);
  r = sfgsr_cli({"report", "--preset", "tiny", "--json"});
  CHECK(nlohmann::json::parse(r.out)["params"] == 38915);
  r = sfgsr_cli({"report", "--preset", "tiny"});
  CHECK(r.out.find("38915") != std::string::npos);
  const auto d = scratch("report");
  std::ofstream(d / "bad.cfg") << "embed_dim = 10\nheads = 3,3\ndepths = 2,2\n";
  r = sfgsr_cli({"report", "--config", (d / "bad.cfg").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("heads") != std::string::npos);
  std::ofstream(d / "unknown.cfg") << "colour = blue\n";
  CHECK(sfgsr_cli({"report", "--config", (d / "unknown.cfg").string()}).code == cli::kExitUsage);
  CHECK(sfgsr_cli({"report", "--preset", "huge"}).code == cli::kExitUsage);
  fs::remove_all(d);
}

TEST_CASE("cli gradcheck: passing scope, corrupted backward exits 3") {
  auto r = sfgsr_cli({"gradcheck", "--scope", "sfg_ffn"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("sfg_ffn.fc1.weight") != std::string::npos);
  r = sfgsr_cli({"gradcheck", "--scope", "numerics", "--seeds", "1", "--corrupt-backward"});
  CHECK(r.code == cli::kExitVerification);
  CHECK(r.out.find("FAIL") != std::string::npos);
  CHECK(!num::testing::corrupt_gelu_backward());
  CHECK(sfgsr_cli({"gradcheck", "--scope", "numerics", "--seeds", "1"}).code == cli::kExitOk);
  CHECK(sfgsr_cli({"gradcheck", "--scope", "nothing"}).code == cli::kExitUsage);
}

TEST_CASE("cli train / sr / metrics: end to end with resume") {
  const auto d = scratch("pipeline");
  const std::vector<std::string> base{"train",    "--preset",     "tiny", "--synthetic", "2",
                                      "--lr-patch", "8",          "--steps", "4",        "--batch-size",
                                      "2",        "--checkpoint-every", "2", "--lr",      "1e-3"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return sfgsr_cli(a);
  };
  auto r = with({"--out", (d / "run").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(fs::exists(d / "run" / "step_000002.sfgc"));
  CHECK(fs::exists(d / "run" / "step_000004.sfgc"));
  CHECK(fs::exists(d / "run" / "final.sfgc"));
  const auto full = csv_lines(d / "run" / "history.csv");
  REQUIRE(full.size() == 5);
  r = with({"--out", (d / "resumed").string(), "--resume", (d / "run" / "step_000002.sfgc").string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto tail = csv_lines(d / "resumed" / "history.csv");
  REQUIRE(tail.size() == 3);
  CHECK(tail[1] == full[3]);
  CHECK(tail[2] == full[4]);
  CHECK(read_file(d / "resumed" / "final.sfgc") == read_file(d / "run" / "final.sfgc"));
  CHECK(with({"--out", (d / "x").string(), "--loss-terms", "l1,perceptual"}).code == cli::kExitUsage);

  // sr: 64x64 in, 128x128 out, bitwise repeatable.
  write_scene(d / "lr" / "img.ppm", 3, 64, 64, 4);
  const auto ckpt = (d / "run" / "final.sfgc").string();
  r = sfgsr_cli({"sr", "--checkpoint", ckpt, "--in", (d / "lr").string(), "--out", (d / "sr1").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(load_image(d / "sr1" / "img.ppm").shape() == num::Shape{3, 128, 128});
  sfgsr_cli({"sr", "--checkpoint", ckpt, "--in", (d / "lr").string(), "--out", (d / "sr2").string()});
  CHECK(read_file(d / "sr1" / "img.ppm") == read_file(d / "sr2" / "img.ppm"));
  CHECK(sfgsr_cli({"sr", "--checkpoint", (d / "none.sfgc").string(), "--in", (d / "lr").string(), "--out",
                   (d / "sr3").string()})
            .code == cli::kExitUsage);
  write_scene(d / "lr4" / "multi.sfgt", 4, 16, 16, 5);
  r = sfgsr_cli({"sr", "--checkpoint", ckpt, "--in", (d / "lr4").string(), "--out", (d / "sr4").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("4 bands") != std::string::npos);

  // metrics: identical directories.
  r = sfgsr_cli({"metrics", "--sr", (d / "sr1").string(), "--ref", (d / "sr2").string(), "--csv",
                 (d / "m.csv").string()});
  CHECK(r.code == cli::kExitOk);
  const auto rows = csv_lines(d / "m.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1] == "img.ppm,inf,1,0");
  CHECK(rows[2] == "mean,inf,1,0");
  fs::remove_all(d);
}

TEST_CASE("cli metrics: bicubic table, mean row, unpaired files") {
  const auto d = scratch("metrics");
  DegradationConfig deg;
  for (int i = 0; i < 3; ++i) {
    const std::string n = "p" + std::to_string(i) + ".sfgt";
    const auto hr = synthetic_scene<float>(3, 32, 32, 20 + i);
    fs::create_directories(d / "ref");
    fs::create_directories(d / "sr");
    save_image(d / "ref" / n, hr);
    const auto lr = degrade(hr, deg, i);
    save_image(d / "sr" / n, num::bicubic_resize(lr, 32, 32));
  }
  auto r = sfgsr_cli({"metrics", "--sr", (d / "sr").string(), "--ref", (d / "ref").string(), "--csv",
                      (d / "m.csv").string()});
  CHECK(r.code == cli::kExitOk);
  const auto rows = csv_lines(d / "m.csv");
  REQUIRE(rows.size() == 5);
  double sums[3] = {0, 0, 0}, mean[3] = {0, 0, 0};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string name, cell;
    std::getline(ss, name, ',');
    for (int k = 0; k < 3; ++k) {
      std::getline(ss, cell, ',');
      const double v = std::stod(cell);
      CHECK(std::isfinite(v));
      if (i < 4) sums[k] += v;
      else mean[k] = v;
    }
  }
  for (int k = 0; k < 3; ++k) CHECK(mean[k] == doctest::Approx(sums[k] / 3).epsilon(1e-12));
  CHECK(mean[0] > 15.0);
  fs::remove(d / "sr" / "p2.sfgt");
  write_scene(d / "sr" / "extra.sfgt", 3, 32, 32, 9);
  r = sfgsr_cli({"metrics", "--sr", (d / "sr").string(), "--ref", (d / "ref").string()});
  CHECK(r.code == cli::kExitPartial);
  CHECK(r.err.find("extra.sfgt") != std::string::npos);
  CHECK(r.err.find("p2.sfgt") != std::string::npos);
  fs::remove_all(d);
}

TEST_CASE("cli ablation: five rows and a CSV") {
  const auto d = scratch("ablation");
  const auto r = sfgsr_cli({"ablation", "--steps", "1", "--synthetic", "2", "--lr-patch", "8", "--out",
                            d.string()});
  REQUIRE(r.code == cli::kExitOk);
  for (const char* n : {"FFN+L1", "FFN+all", "SFG+L1", "SFG+L1/SSIM", "SFG+all"}) {
    CHECK(r.out.find(n) != std::string::npos);
  }
  CHECK(csv_lines(d / "ablation.csv").size() == 6);
  fs::remove_all(d);
}
