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

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfgsr/io.hpp"
#include "sfgsr/trainer.hpp"

namespace sfgsr::cli {

namespace {

// A failure that maps directly onto an exit code.
struct Exit {
  int code;
  std::string message;
};

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return is_ppm_path(p) || ext == ".sfgt";
}

// Sorted image files of a directory; sidecars and temp files are skipped.
std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Exit{kExitUsage, "not a directory: " + dir.string()};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Exit{kExitUsage, "cannot create output directory " + dir.string()};
}

// Stable per-file noise stream, independent of directory contents (FNV-1a).
std::uint64_t name_key(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Runs f(i) for i in [0, n) on up to worker_count() threads. Each index is
// handled by exactly one thread; results go to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

KeyValues read_kv_file(const fs::path& path) {
  try {
    return KeyValues::parse(read_file(path));
  } catch (const FormatError& e) {
    throw Exit{kExitUsage, path.string() + ": " + e.what()};
  }
}

std::string fmt(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string in, out, config;
  std::optional<double> blur_sigma, noise_sigma;
  std::optional<std::int64_t> blur_size, scale;
  std::optional<std::uint64_t> seed;
};

int cmd_degrade(const DegradeArgs& a, std::ostream& out, std::ostream& err) {
  DegradationConfig cfg;
  if (!a.config.empty()) cfg = DegradationConfig::from_key_values(read_kv_file(a.config));
  if (a.blur_sigma) cfg.blur_sigma = *a.blur_sigma;
  if (a.noise_sigma) cfg.noise_sigma = *a.noise_sigma;
  if (a.blur_size) cfg.blur_kernel_size = *a.blur_size;
  if (a.scale) cfg.scale = *a.scale;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const auto files = list_images(a.in);
  ensure_dir(a.out);
  std::vector<std::string> failures(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const auto& src = files[i];
    try {
      const auto hr = load_image(src);
      const std::string name = src.filename().string();
      const std::uint64_t index = name_key(name);
      const auto lr = degrade(hr, cfg, index);
      save_image(fs::path(a.out) / name, lr);
      KeyValues meta = cfg.to_key_values();
      meta.set("source", name);
      meta.set("image_index", std::to_string(index));
      meta.set("hr_size", join_ints({hr.dim(0), hr.dim(1), hr.dim(2)}));
      meta.set("lr_size", join_ints({lr.dim(0), lr.dim(1), lr.dim(2)}));
      write_text(fs::path(a.out) / (name + ".meta"), meta.to_text());
    } catch (const std::exception& e) {
      failures[i] = src.string() + ": " + e.what();
    }
  });
  std::size_t bad = 0;
  for (const auto& f : failures) {
    if (!f.empty()) {
      err << "unreadable input: " << f << "\n";
      ++bad;
    }
  }
  out << "degraded " << files.size() - bad << " of " << files.size() << " images\n";
  return bad ? kExitPartial : kExitOk;
}

// --------------------------------------------------------------------- sr

int cmd_sr(const std::string& ckpt_path, const std::string& in, const std::string& out_dir,
           std::ostream& out, std::ostream& err) {
  if (!fs::exists(ckpt_path)) throw Exit{kExitUsage, "checkpoint not found: " + ckpt_path};
  const Model<float> model = model_from_checkpoint<float>(load_checkpoint(ckpt_path));
  const auto files = list_images(in);
  std::vector<std::pair<fs::path, Tensor<float>>> inputs;
  std::vector<std::string> failures;
  for (const auto& f : files) {
    try {
      inputs.emplace_back(f, load_image(f));
    } catch (const std::exception& e) {
      failures.push_back(f.string() + ": " + e.what());
    }
  }
  for (const auto& [path, img] : inputs) {
    if (img.dim(0) != model.config.bands) {
      throw Exit{kExitUsage, "band mismatch: " + path.filename().string() + " has " +
                                 std::to_string(img.dim(0)) + " bands, checkpoint expects " +
                                 std::to_string(model.config.bands)};
    }
  }
  ensure_dir(out_dir);
  std::vector<std::string> write_failures(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const auto& [path, img] = inputs[i];
    try {
      const auto lr = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
      const auto sr = super_resolve(model, lr);
      save_image(fs::path(out_dir) / path.filename(), sr.reshaped({sr.dim(1), sr.dim(2), sr.dim(3)}));
    } catch (const std::exception& e) {
      write_failures[i] = path.string() + ": " + e.what();
    }
  });
  std::size_t written = inputs.size();
  for (auto& f : write_failures) {
    if (!f.empty()) {
      failures.push_back(f);
      --written;
    }
  }
  for (const auto& f : failures) err << "failed: " << f << "\n";
  out << "super-resolved " << written << " of " << files.size() << " images (x" << model.config.scale
      << ")\n";
  return failures.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------- metrics

int cmd_metrics(const std::string& sr_dir, const std::string& ref_dir, const std::string& csv_path,
                std::ostream& out, std::ostream& err) {
  const auto srs = list_images(sr_dir);
  const auto refs = list_images(ref_dir);
  std::map<std::string, fs::path> ref_by_name;
  for (const auto& r : refs) ref_by_name.emplace(r.filename().string(), r);
  std::vector<std::string> problems;
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& s : srs) {
    auto it = ref_by_name.find(s.filename().string());
    if (it == ref_by_name.end()) {
      problems.push_back("unpaired: " + s.string());
    } else {
      pairs.emplace_back(s, it->second);
      ref_by_name.erase(it);
    }
  }
  for (const auto& [name, path] : ref_by_name) problems.push_back("unpaired: " + path.string());
  struct Row {
    std::string name;
    double psnr = 0, ssim = 0, mae = 0;
    std::string error;
  };
  std::vector<Row> rows(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    Row& r = rows[i];
    r.name = pairs[i].first.filename().string();
    try {
      const auto a = load_image(pairs[i].first);
      const auto b = load_image(pairs[i].second);
      if (a.shape() != b.shape()) {
        throw ShapeError("size " + num::to_string(a.shape()) + " vs reference " + num::to_string(b.shape()));
      }
      r.psnr = psnr(a, b);
      r.ssim = ssim_metric(a, b);
      r.mae = mae(a, b);
    } catch (const std::exception& e) {
      r.error = pairs[i].first.string() + ": " + e.what();
    }
  });
  std::vector<Row> good;
  for (const auto& r : rows) {
    if (r.error.empty()) {
      good.push_back(r);
    } else {
      problems.push_back(r.error);
    }
  }
  Row mean;
  mean.name = "mean";
  for (const auto& r : good) {
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    mean.mae += r.mae;
  }
  if (!good.empty()) {
    const double n = static_cast<double>(good.size());
    mean.psnr /= n;
    mean.ssim /= n;
    mean.mae /= n;
  }
  std::size_t width = 5;
  for (const auto& r : good) width = std::max(width, r.name.size());
  auto line = [&](const Row& r) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setw(12)
        << fmt(r.psnr, 4) << std::setw(10) << fmt(r.ssim, 6) << std::setw(12) << fmt(r.mae, 6) << "\n";
  };
  out << std::left << std::setw(static_cast<int>(width)) << "image" << std::right << std::setw(12)
      << "PSNR(dB)" << std::setw(10) << "SSIM" << std::setw(12) << "MAE" << "\n";
  for (const auto& r : good) line(r);
  if (!good.empty()) line(mean);
  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "image,psnr,ssim,mae\n";
    auto csv_line = [&](const Row& r) {
      csv << r.name << ',' << (std::isinf(r.psnr) ? std::string("inf") : format_double(r.psnr)) << ','
          << format_double(r.ssim) << ',' << format_double(r.mae) << '\n';
    };
    for (const auto& r : good) csv_line(r);
    if (!good.empty()) csv_line(mean);
    write_text(csv_path, csv.str());
  }
  for (const auto& p : problems) err << p << "\n";
  return problems.empty() ? kExitOk : kExitPartial;
}

// ----------------------------------------------------------------- report

ModelConfig preset(const std::string& name) {
  if (name == "full") return ModelConfig::full();
  if (name == "full-baseline") {
    auto c = ModelConfig::full();
    c.ffn = FfnKind::kBaseline;
    return c;
  }
  if (name == "tiny") return ModelConfig::tiny();
  throw Exit{kExitUsage, "unknown preset '" + name + "' (expected full, full-baseline, tiny)"};
}

int cmd_report(const std::string& ckpt, const std::string& config, const std::string& preset_name,
               const std::string& ffn, std::int64_t h, std::int64_t w, bool json, std::ostream& out) {
  ModelConfig cfg;
  std::optional<std::int64_t> stored;
  if (!ckpt.empty()) {
    if (!fs::exists(ckpt)) throw Exit{kExitUsage, "checkpoint not found: " + ckpt};
    const Checkpoint c = load_checkpoint(ckpt);
    cfg = checkpoint_config(c);
    std::int64_t n = 0;
    for (const auto& [name, t] : c.entries) {
      if (name.rfind(kOptimizerPrefix, 0) != 0) n += static_cast<std::int64_t>(num::numel(shape_of(t)));
    }
    stored = n;
  } else if (!config.empty()) {
    cfg = ModelConfig::from_key_values(read_kv_file(config));
  } else {
    cfg = preset(preset_name);
  }
  if (!ffn.empty()) cfg.ffn = parse_ffn_kind(ffn);
  const ComplexityReport r = estimate_complexity(cfg, h, w);
  if (json) {
    nlohmann::ordered_json j;
    j["ffn"] = to_string(cfg.ffn);
    j["params"] = r.params;
    j["params_m"] = static_cast<double>(r.params) / 1e6;
    j["flops"] = r.flops;
    j["gflops"] = r.flops / 1e9;
    j["input"] = {{"bands", cfg.bands}, {"height", r.input_h}, {"width", r.input_w}};
    for (const auto& item : r.param_breakdown) j["param_breakdown"][item.name] = item.value;
    for (const auto& item : r.flop_breakdown) j["flop_breakdown"][item.name] = item.value;
    const KeyValues kv = cfg.to_key_values();
    for (const auto& [k, v] : kv.entries()) j["config"][k] = v;
    if (stored) j["stored_params"] = *stored;
    out << j.dump(2) << "\n";
  } else {
    out << "ffn            " << to_string(cfg.ffn) << "\n";
    out << "parameters     " << r.params << " (" << fmt(r.params / 1e6, 2) << " M)\n";
    out << "flops          " << fmt(r.flops / 1e9, 2) << " G for a " << cfg.bands << "x" << r.input_h
        << "x" << r.input_w << " input\n";
    if (stored) out << "stored         " << *stored << " parameters in checkpoint\n";
    out << "parameter breakdown:\n";
    for (const auto& item : r.param_breakdown) {
      out << "  " << std::left << std::setw(16) << item.name << std::right << std::setw(14)
          << static_cast<long long>(item.value) << "\n";
    }
    out << "flop breakdown (G):\n";
    for (const auto& item : r.flop_breakdown) {
      out << "  " << std::left << std::setw(16) << item.name << std::right << std::setw(14)
          << fmt(item.value / 1e9, 4) << "\n";
    }
  }
  if (stored && *stored != r.params) {
    throw Exit{kExitVerification, "checkpoint stores " + std::to_string(*stored) +
                                      " parameters but the configuration predicts " + std::to_string(r.params)};
  }
  return kExitOk;
}

// -------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& scope, int seeds, double tol, bool corrupt, std::ostream& out) {
  GradcheckSuiteOptions opts;
  opts.seeds = seeds;
  opts.tol = tol;
  num::testing::set_corrupt_gelu_backward(corrupt);
  std::vector<GradcheckCase> cases;
  try {
    cases = run_gradcheck_suite(scope, opts);
  } catch (...) {
    num::testing::set_corrupt_gelu_backward(false);
    throw;
  }
  num::testing::set_corrupt_gelu_backward(false);
  std::size_t failed = 0;
  for (const auto& c : cases) {
    out << std::left << std::setw(10) << c.scope << std::setw(52) << c.name << std::right
        << std::scientific << std::setprecision(3) << std::setw(12) << c.max_rel_err << std::defaultfloat
        << std::setw(8) << c.checked << "  " << (c.pass ? "ok" : "FAIL") << "\n";
    failed += c.pass ? 0 : 1;
  }
  out << cases.size() - failed << " of " << cases.size() << " gradient checks passed\n";
  return failed ? kExitVerification : kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string model_config, train_config, data, out, resume, ffn, loss_terms;
  std::string preset = "tiny";
  std::optional<std::int64_t> steps, batch_size, checkpoint_every;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::size_t synthetic = 4;
  std::int64_t lr_patch = 16;
  std::size_t patches_per_image = 8;
};

LossWeights apply_terms(LossWeights w, const std::string& list) {
  std::set<std::string> terms;
  std::stringstream ss(list);
  for (std::string t; std::getline(ss, t, ',');) {
    if (t != "l1" && t != "ssim" && t != "edge" && t != "freq") {
      throw Exit{kExitUsage, "unknown loss term '" + t + "' (expected l1, ssim, edge, freq)"};
    }
    terms.insert(t);
  }
  if (terms.empty()) throw Exit{kExitUsage, "--loss-terms needs at least one term"};
  w.use_l1 = terms.count("l1");
  w.use_ssim = terms.count("ssim");
  w.use_edge = terms.count("edge");
  w.use_freq = terms.count("freq");
  return w;
}

std::vector<PatchPair<float>> load_training_patches(const TrainArgs& a, const ModelConfig& mc,
                                                    std::uint64_t seed, std::ostream& err) {
  DegradationConfig deg;
  deg.scale = mc.scale;
  if (a.data.empty()) return synthetic_patches<float>(mc.bands, a.synthetic, a.lr_patch, deg, seed);
  std::vector<PatchPair<float>> out;
  for (const auto& f : list_images(a.data)) {
    try {
      const auto hr = load_image(f);
      if (hr.dim(0) != mc.bands) throw ShapeError("has " + std::to_string(hr.dim(0)) + " bands");
      const std::uint64_t key = name_key(f.filename().string());
      const auto lr = degrade(hr, deg, key);
      auto pairs = extract_patch_pairs(hr, lr, a.lr_patch, mc.scale, a.patches_per_image, seed ^ key);
      out.insert(out.end(), pairs.begin(), pairs.end());
    } catch (const std::exception& e) {
      err << "skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (out.empty()) throw Exit{kExitUsage, "no usable training images in " + a.data};
  return out;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig tc;
  if (!a.train_config.empty()) tc = TrainConfig::from_key_values(read_kv_file(a.train_config));
  if (a.steps) tc.total_steps = *a.steps;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.checkpoint_every) tc.checkpoint_every = *a.checkpoint_every;
  if (a.lr) tc.lr0 = *a.lr;
  if (a.seed) tc.seed = *a.seed;
  if (!a.loss_terms.empty()) tc.loss = apply_terms(tc.loss, a.loss_terms);
  tc.validate();
  TrainState<float> state;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw Exit{kExitUsage, "checkpoint not found: " + a.resume};
    state = train_state_from_checkpoint<float>(load_checkpoint(a.resume));
  } else {
    ModelConfig mc = a.model_config.empty() ? preset(a.preset)
                                            : ModelConfig::from_key_values(read_kv_file(a.model_config));
    if (!a.ffn.empty()) mc.ffn = parse_ffn_kind(a.ffn);
    state.model = build_model<float>(mc);
  }
  const auto data = load_training_patches(a, state.model.config, tc.seed, err);
  const fs::path dir(a.out);
  ensure_dir(dir);
  write_text(dir / "train.cfg", tc.to_key_values().to_text());
  write_text(dir / "model.cfg", state.model.config.to_key_values().to_text());
  const auto history = train(state, data, tc, -1, [&](const TrainState<float>& s) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06lld.sfgc", static_cast<long long>(s.step));
    save_checkpoint(dir / name, train_checkpoint(s));
  });
  save_checkpoint(dir / "final.sfgc", train_checkpoint(state));
  std::ostringstream csv;
  write_history_csv(csv, history);
  write_text(dir / "history.csv", csv.str());
  if (!history.empty()) {
    out << "steps " << history.front().step << ".." << history.back().step << "  loss "
        << fmt(history.front().total, 6) << " -> " << fmt(history.back().total, 6) << "\n";
  }
  const auto m = evaluate_model(state.model, data);
  out << "training-set PSNR " << fmt(m.psnr, 3) << " dB, SSIM " << fmt(m.ssim, 4) << ", MAE "
      << fmt(m.mae, 5) << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- ablation

int cmd_ablation(const std::string& out_dir, std::int64_t steps, std::size_t synthetic,
                 std::int64_t lr_patch, double lr, std::ostream& out) {
  TrainConfig tc;
  tc.total_steps = steps;
  tc.lr0 = lr;
  tc.validate();
  DegradationConfig deg;
  const auto train_set = synthetic_patches<float>(3, synthetic, lr_patch, deg, tc.seed);
  const auto eval_set = synthetic_patches<float>(3, synthetic, lr_patch, deg, tc.seed + 1);
  const auto rows = run_ablation<float>(ModelConfig::tiny(), tc, train_set, eval_set);
  out << format_ablation_table(rows);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    write_text(fs::path(out_dir) / "ablation.csv", csv.str());
  }
  return kExitOk;
}

}  // namespace

unsigned worker_count() {
  const char* env = std::getenv("SFG_THREADS");
  long requested = 0;
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    requested = std::strtol(env, &end, 10);
    if (*end != '\0' || requested < 0) requested = 0;
  }
  if (requested > 0) return static_cast<unsigned>(requested);
  return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial-frequency gated Swin super-resolution toolkit"};
  app.name("sfgsr");
  app.require_subcommand(1);

  DegradeArgs dg;
  auto* degrade_cmd = app.add_subcommand("degrade", "Simulate low-resolution images from HR images");
  degrade_cmd->add_option("--in", dg.in, "Directory of HR images (.ppm or .sfgt)")->required();
  degrade_cmd->add_option("--out", dg.out, "Output directory")->required();
  degrade_cmd->add_option("--config", dg.config, "Degradation key = value file");
  degrade_cmd->add_option("--blur-sigma", dg.blur_sigma, "Gaussian blur sigma (pixels)");
  degrade_cmd->add_option("--blur-size", dg.blur_size, "Odd blur kernel size");
  degrade_cmd->add_option("--scale", dg.scale, "Downsampling factor");
  degrade_cmd->add_option("--noise-sigma", dg.noise_sigma, "Gaussian noise sigma on [0, 1] data");
  degrade_cmd->add_option("--seed", dg.seed, "Noise seed");

  std::string ckpt, in_dir, out_dir;
  auto* sr_cmd = app.add_subcommand("sr", "Super-resolve a directory of images");
  sr_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  sr_cmd->add_option("--in", in_dir, "Directory of LR images")->required();
  sr_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::string sr_dir, ref_dir, csv_path;
  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR / SSIM / MAE of paired images");
  metrics_cmd->add_option("--sr", sr_dir, "Directory of reconstructed images")->required();
  metrics_cmd->add_option("--ref", ref_dir, "Directory of reference images")->required();
  metrics_cmd->add_option("--csv", csv_path, "Also write the table as CSV");

  std::string report_ckpt, report_config, report_preset = "full", report_ffn;
  std::int64_t report_h = 64, report_w = 64;
  bool report_json = false;
  auto* report_cmd = app.add_subcommand("report", "Parameter and FLOP report");
  auto* rc = report_cmd->add_option("--checkpoint", report_ckpt, "Read the configuration from a checkpoint");
  report_cmd->add_option("--config", report_config, "Model key = value file")->excludes(rc);
  report_cmd->add_option("--preset", report_preset, "full, full-baseline or tiny");
  report_cmd->add_option("--ffn", report_ffn, "Override the FFN kind (sfg or baseline)");
  report_cmd->add_option("--height", report_h, "Assumed input height");
  report_cmd->add_option("--width", report_w, "Assumed input width");
  report_cmd->add_flag("--json", report_json, "Emit JSON");

  std::string gc_scope = "all";
  int gc_seeds = 5;
  double gc_tol = 1e-4;
  bool gc_corrupt = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gc_cmd->add_option("--scope", gc_scope, "numerics, objective, sfg_ffn, swin, model or all");
  gc_cmd->add_option("--seeds", gc_seeds, "Random seeds per case");
  gc_cmd->add_option("--tol", gc_tol, "Tolerance for per-module checks");
  gc_cmd->add_flag("--corrupt-backward", gc_corrupt, "Deliberately break one backward rule");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--model-config", ta.model_config, "Model key = value file");
  train_cmd->add_option("--preset", ta.preset, "Model preset when no config is given");
  train_cmd->add_option("--train-config", ta.train_config, "Training key = value file");
  train_cmd->add_option("--data", ta.data, "Directory of HR images (default: synthetic scenes)");
  train_cmd->add_option("--synthetic", ta.synthetic, "Synthetic patch count without --data");
  train_cmd->add_option("--lr-patch", ta.lr_patch, "LR patch size");
  train_cmd->add_option("--patches-per-image", ta.patches_per_image, "Crops per HR image");
  train_cmd->add_option("--resume", ta.resume, "Continue from a training checkpoint");
  train_cmd->add_option("--ffn", ta.ffn, "sfg or baseline");
  train_cmd->add_option("--loss-terms", ta.loss_terms, "Comma list of l1, ssim, edge, freq");
  train_cmd->add_option("--steps", ta.steps, "Total optimizer steps");
  train_cmd->add_option("--batch-size", ta.batch_size, "Batch size");
  train_cmd->add_option("--lr", ta.lr, "Initial learning rate");
  train_cmd->add_option("--seed", ta.seed, "Training seed");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Checkpoint period in steps");

  std::string ab_out;
  std::int64_t ab_steps = 50, ab_patch = 16;
  std::size_t ab_synthetic = 4;
  double ab_lr = 1e-3;
  auto* ab_cmd = app.add_subcommand("ablation", "Run the five-setting ablation grid at tiny scale");
  ab_cmd->add_option("--out", ab_out, "Directory for ablation.csv");
  ab_cmd->add_option("--steps", ab_steps, "Steps per setting");
  ab_cmd->add_option("--synthetic", ab_synthetic, "Synthetic patch count");
  ab_cmd->add_option("--lr-patch", ab_patch, "LR patch size");
  ab_cmd->add_option("--lr", ab_lr, "Initial learning rate");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*degrade_cmd) return cmd_degrade(dg, out, err);
    if (*sr_cmd) return cmd_sr(ckpt, in_dir, out_dir, out, err);
    if (*metrics_cmd) return cmd_metrics(sr_dir, ref_dir, csv_path, out, err);
    if (*report_cmd) {
      return cmd_report(report_ckpt, report_config, report_preset, report_ffn, report_h, report_w,
                        report_json, out);
    }
    if (*gc_cmd) return cmd_gradcheck(gc_scope, gc_seeds, gc_tol, gc_corrupt, out);
    if (*train_cmd) return cmd_train(ta, out, err);
    if (*ab_cmd) return cmd_ablation(ab_out, ab_steps, ab_synthetic, ab_patch, ab_lr, out);
  } catch (const Exit& e) {
    err << "error: " << e.message << "\n";
    return e.code;
  } catch (const NonFiniteLossError& e) {
    err << "error: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sfgsr::cli
