#pragma once

// Operator-facing commands behind the `vmatt` tool: inference over frame
// sequences, metric evaluation, throughput benchmarks, compositing, synthetic
// dataset emission, and staged training. Every command writes a manifest of
// its resolved options next to its outputs so a run can be reproduced.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmatt/checkpoint.hpp"
#include "vmatt/image_io.hpp"
#include "vmatt/metrics.hpp"
#include "vmatt/trainer.hpp"

namespace vmatt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string checkpoint_path;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::uint64_t seed = 0;
  json options = json::object();

  json to_json() const {
    json j;
    j["format"] = "run-manifest@1";
    j["command"] = command;
    j["config"] = config_path;
    j["checkpoint"] = checkpoint_path;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed;
    j["options"] = options;
    return j;
  }

  void write(const fs::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest " + path.string());
    os << to_json().dump(2) << "\n";
  }
};

// For commands whose output is a single file the manifest sits beside it as
// <file>.manifest.json; directory outputs get <dir>/run_manifest.json.
inline fs::path manifest_path_for(const fs::path& output, bool is_dir) {
  return is_dir ? output / "run_manifest.json"
                : fs::path(output.string() + ".manifest.json");
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace detail {

// Accepts either a clip directory (uses its "frame" plane) or a raw planar
// video file; returns (T,3,H,W).
inline Tensor<float> load_frames(const std::string& input) {
  Tensor<float> frames;
  if (fs::is_directory(input)) {
    auto planes = load_clip_dir(input);
    auto it = planes.find("frame");
    check(it != planes.end(), input + ": clip has no 'frame' plane");
    frames = it->second;
  } else {
    if (!fs::exists(input)) throw IoError(input + ": no such file");
    frames = load_raw_video(input);
  }
  check_shape(frames.dim(1) == 3,
              input + ": expected 3-channel frames, got " + frames.shape().str());
  return frames;
}

// Replicate-pads the bottom/right edges up to the next multiple of 16 and
// says so; the caller crops the outputs back.
inline Tensor<float> pad_to_16(const Tensor<float>& x, int& orig_h, int& orig_w) {
  orig_h = x.dim(2);
  orig_w = x.dim(3);
  const int pb = (16 - orig_h % 16) % 16;
  const int pr = (16 - orig_w % 16) % 16;
  if (pb == 0 && pr == 0) return x;
  std::fprintf(stderr,
               "notice: padding %dx%d input to %dx%d (extents must be multiples of 16); "
               "outputs are cropped back\n",
               orig_h, orig_w, orig_h + pb, orig_w + pr);
  return pad2d(x, 0, pb, 0, pr, PadMode::kReplicate);
}

inline Tensor<float> crop_back(const Tensor<float>& x, int h, int w) {
  if (x.dim(2) == h && x.dim(3) == w) return x;
  return narrow(narrow(x, 2, 0, h), 3, 0, w);
}

inline std::string clip_label(const fs::path& dir) {
  auto name = dir.filename().string();
  if (name.empty() || name == ".") name = fs::absolute(dir).parent_path().filename().string();
  return name.empty() ? "clip" : name;
}

// A directory is either itself a clip (has manifest.json) or a folder of
// clip subdirectories, returned in name order.
inline std::vector<fs::path> find_clips(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError(root + ": not a directory");
  if (fs::exists(fs::path(root) / "manifest.json")) return {fs::path(root)};
  std::vector<fs::path> clips;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      clips.push_back(entry.path());
  std::sort(clips.begin(), clips.end());
  check(!clips.empty(), root + ": no clips found (no manifest.json at any level)");
  return clips;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOptions {
  std::string checkpoint;
  std::string input;   // clip directory or raw planar video file
  std::string output;  // clip directory to create
  std::string background;  // optional PNG to composite over
  double downsample = 1.0;
  bool dgf = false;
  bool streaming = false;  // frame-by-frame with carried state
};

inline void run_infer(const InferOptions& o) {
  check(!o.dgf || o.downsample < 1.0,
        "--dgf needs --downsample below 1: the guided-filter head refines a "
        "low-resolution pass back to full resolution, so at s=1 there is nothing "
        "for it to refine");
  check(o.downsample > 0.0 && o.downsample <= 1.0,
        "--downsample must be in (0,1], got " + std::to_string(o.downsample));

  const auto meta = read_checkpoint_meta(o.checkpoint);
  auto model = build_model<float>(meta.config, 0);
  load_checkpoint(o.checkpoint, model);

  auto frames = detail::load_frames(o.input);
  const int T = frames.dim(0);
  int H = 0, W = 0;
  auto x = detail::pad_to_16(frames, H, W);

  ForwardOptions fopt;
  fopt.downsample = o.downsample;
  fopt.use_dgf = o.dgf;

  Tensor<float> alpha, fg;
  if (o.streaming) {
    RecurrentState<float> state;
    std::vector<Tensor<float>> alphas, fgs;
    for (int t = 0; t < T; ++t) {
      auto [out, next] = model.forward_time_major(narrow(x, 0, t, 1), 1, state, fopt);
      state = next;
      alphas.push_back(out.alpha);
      fgs.push_back(out.foreground);
    }
    alpha = concat(alphas, 0);
    fg = concat(fgs, 0);
  } else {
    auto [out, state] = model.forward_time_major(x, T, RecurrentState<float>{}, fopt);
    alpha = out.alpha;
    fg = out.foreground;
  }
  alpha = detail::crop_back(alpha, H, W);
  fg = detail::crop_back(fg, H, W);

  std::map<std::string, Tensor<float>> planes{{"alpha", alpha}, {"fg", fg}};
  if (!o.background.empty()) {
    auto bg1 = load_png(o.background);
    check_shape(bg1.rank() == 3 && bg1.dim(0) == 3 && bg1.dim(1) == H && bg1.dim(2) == W,
                o.background + ": background must be RGB at the clip extents");
    std::vector<Tensor<float>> tiled(static_cast<size_t>(T), bg1.unsqueeze0());
    planes.emplace("composite", composite(fg, alpha, concat(tiled, 0)));
  }
  save_clip_dir(o.output, planes);

  RunManifest m;
  m.command = "infer";
  m.checkpoint_path = o.checkpoint;
  m.inputs["frames"] = o.input;
  if (!o.background.empty()) m.inputs["background"] = o.background;
  m.outputs["clip"] = o.output;
  m.options = {{"downsample", o.downsample},
               {"dgf", o.dgf},
               {"streaming", o.streaming},
               {"frames", T},
               {"height", H},
               {"width", W}};
  m.write(manifest_path_for(o.output, true));
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string pred;  // clip dir or directory of clip dirs
  std::string gt;
  std::string report;     // output report path
  std::string frame_mad;  // optional per-frame MAD trace path
  std::vector<std::string> metrics;  // empty = all applicable
};

inline void run_eval(const EvalOptions& o) {
  static const std::set<std::string> known{"mad", "mse", "grad", "conn",
                                           "dtssd", "fgmse", "miou"};
  std::set<std::string> want(o.metrics.begin(), o.metrics.end());
  if (want.empty()) want = known;
  for (const auto& name : want)
    check(known.count(name) == 1, "eval: unknown metric '" + name + "'");

  const auto pred_clips = detail::find_clips(o.pred);
  const auto gt_clips = detail::find_clips(o.gt);
  check(pred_clips.size() == gt_clips.size(),
        "eval: " + std::to_string(pred_clips.size()) + " prediction clips vs " +
            std::to_string(gt_clips.size()) + " ground-truth clips");

  std::ostringstream report, trace;
  std::vector<MetricReport> reports;
  std::vector<std::string> labels;
  for (size_t c = 0; c < pred_clips.size(); ++c) {
    auto pp = load_clip_dir(pred_clips[c].string());
    auto gp = load_clip_dir(gt_clips[c].string());
    check(pp.count("alpha") == 1, pred_clips[c].string() + ": no alpha plane");
    check(gp.count("alpha") == 1, gt_clips[c].string() + ": no alpha plane");
    const auto& ap = pp.at("alpha");
    const auto& ag = gp.at("alpha");
    check_shape(ap.shape() == ag.shape(),
                "eval: misaligned clips: " + ap.shape().str() + " vs " + ag.shape().str());

    MetricReport r;
    if (want.count("mad")) r.mad = mad(ap, ag);
    if (want.count("mse")) r.mse = mse(ap, ag);
    if (want.count("grad")) r.grad = grad_metric(ap, ag);
    if (want.count("conn")) r.conn = conn_metric(ap, ag);
    if (want.count("dtssd") && ap.dim(0) >= 2) r.dtssd = dtssd(ap, ag, ap.dim(0));
    if (want.count("fgmse") && pp.count("fg") && gp.count("fg")) {
      check_shape(pp.at("fg").shape() == gp.at("fg").shape(),
                  "eval: misaligned foreground planes");
      r.fg_mse = fg_mse(pp.at("fg"), gp.at("fg"), ag);
    }
    if (want.count("miou")) {
      auto pm = pp.count("seg") ? pp.at("seg") : alpha_to_mask(ap);
      auto gm = gp.count("seg") ? gp.at("seg") : alpha_to_mask(ag);
      check_shape(pm.shape() == gm.shape(), "eval: misaligned segmentation planes");
      r.miou = miou(pm, gm);
    }

    const auto label = detail::clip_label(pred_clips[c]);
    labels.push_back(label);
    reports.push_back(r);
    report << report_lines(label, r);

    if (!o.frame_mad.empty()) {
      const auto per_frame = mad_per_frame(ap, ag);
      trace << std::setprecision(9);
      for (size_t t = 0; t < per_frame.size(); ++t)
        trace << label << "\t" << t << "\t" << per_frame[t] << "\n";
    }
  }

  // Aggregate: mean of every metric present in at least one clip report.
  MetricReport agg;
  auto fold = [&](auto member) {
    double sum = 0;
    int n = 0;
    for (const auto& r : reports)
      if ((r.*member).has_value()) {
        sum += *(r.*member);
        ++n;
      }
    return n ? std::optional<double>(sum / n) : std::nullopt;
  };
  agg.mad = fold(&MetricReport::mad);
  agg.mse = fold(&MetricReport::mse);
  agg.grad = fold(&MetricReport::grad);
  agg.conn = fold(&MetricReport::conn);
  agg.dtssd = fold(&MetricReport::dtssd);
  agg.fg_mse = fold(&MetricReport::fg_mse);
  agg.miou = fold(&MetricReport::miou);
  report << report_lines("aggregate", agg);

  {
    std::ofstream os(o.report, std::ios::trunc);
    if (!os) throw IoError("cannot write report " + o.report);
    os << report.str();
  }
  if (!o.frame_mad.empty()) {
    std::ofstream os(o.frame_mad, std::ios::trunc);
    if (!os) throw IoError("cannot write per-frame trace " + o.frame_mad);
    os << trace.str();
  }

  RunManifest m;
  m.command = "eval";
  m.inputs["pred"] = o.pred;
  m.inputs["gt"] = o.gt;
  m.outputs["report"] = o.report;
  if (!o.frame_mad.empty()) m.outputs["frame_mad"] = o.frame_mad;
  m.options["metrics"] = std::vector<std::string>(want.begin(), want.end());
  m.options["clips"] = labels;
  m.write(manifest_path_for(o.report, false));
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOptions {
  std::string config = "default";  // "default" or "tiny"
  int height = 256;
  int width = 256;
  double downsample = 1.0;
  int frames = 16;  // timed frames after warmup
  int threads = 0;  // 0 = leave as configured
  std::string out = "bench_report.txt";
};

struct BenchResult {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double fps = 0.0;
};

inline BenchResult run_bench(const BenchOptions& o) {
  check(o.config == "default" || o.config == "tiny",
        "bench: --config must be 'default' or 'tiny'");
  check(o.height % 16 == 0 && o.width % 16 == 0,
        "bench: resolution must be a multiple of 16");
  check(o.frames >= 1, "bench: need at least one timed frame");
  if (o.threads > 0) set_thread_count(o.threads);

  const auto mc =
      o.config == "tiny" ? ModelConfig::tiny_test() : ModelConfig::defaults();
  auto model = build_model<float>(mc, 1);

  ForwardOptions fopt;
  fopt.downsample = o.downsample;
  fopt.use_dgf = o.downsample < 1.0;

  Rng rng(42);
  auto frame = Tensor<float>::uniform(Shape{1, 3, o.height, o.width}, rng, 0.0f, 1.0f);

  RecurrentState<float> state;
  for (int t = 0; t < 2; ++t) {  // warmup, excluded from the measurement
    auto [out, next] = model.forward_time_major(frame, 1, state, fopt);
    state = next;
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < o.frames; ++t) {
    auto [out, next] = model.forward_time_major(frame, 1, state, fopt);
    state = next;
  }
  const auto t1 = std::chrono::steady_clock::now();
  const double seconds = std::chrono::duration<double>(t1 - t0).count();

  BenchResult r;
  r.params = model.param_count();
  r.macs = model.macs(o.height, o.width, o.downsample);
  r.fps = o.frames / std::max(seconds, 1e-9);

  std::ostringstream body;
  body << "config " << o.config << "\n"
       << "resolution " << o.height << "x" << o.width << "\n"
       << "downsample " << o.downsample << "\n"
       << "threads " << thread_count() << "\n"
       << "frames " << o.frames << "\n"
       << "params " << r.params << "\n"
       << "macs " << r.macs << "\n"
       << "fps " << std::setprecision(6) << r.fps << "\n";
  std::ofstream os(o.out, std::ios::trunc);
  if (!os) throw IoError("cannot write bench report " + o.out);
  os << body.str();
  std::fputs(body.str().c_str(), stdout);

  RunManifest m;
  m.command = "bench";
  m.outputs["report"] = o.out;
  m.options = {{"config", o.config}, {"height", o.height},   {"width", o.width},
               {"downsample", o.downsample}, {"frames", o.frames}, {"threads", thread_count()}};
  m.write(manifest_path_for(o.out, false));
  return r;
}

// ---------------------------------------------------------------------------
// composite
// ---------------------------------------------------------------------------

struct CompositeOptions {
  std::string fg;     // PNG file, or clip dir providing "fg" (fallback "frame")
  std::string alpha;  // PNG file, or clip dir providing "alpha"
  std::string bg;     // PNG file, or clip dir providing "bg" (fallback "frame")
  std::string out;    // PNG file / clip dir to create
};

inline void run_composite(const CompositeOptions& o) {
  const bool dirs = fs::is_directory(o.fg);
  check(dirs == fs::is_directory(o.alpha) && dirs == fs::is_directory(o.bg),
        "composite: inputs must be all files or all clip directories");

  auto pick = [](const std::string& dir, const char* role, const char* fallback) {
    auto planes = load_clip_dir(dir);
    if (planes.count(role)) return planes.at(role);
    if (fallback && planes.count(fallback)) return planes.at(fallback);
    throw ValueError(dir + ": no '" + role + "' plane");
  };

  Tensor<float> fg, alpha, bg;
  if (dirs) {
    fg = pick(o.fg, "fg", "frame");
    alpha = pick(o.alpha, "alpha", nullptr);
    bg = pick(o.bg, "bg", "frame");
  } else {
    fg = load_png(o.fg).unsqueeze0();
    alpha = load_png(o.alpha).unsqueeze0();
    bg = load_png(o.bg).unsqueeze0();
  }
  check_shape(fg.dim(1) == 3 && bg.dim(1) == 3 && alpha.dim(1) == 1,
              "composite: want 3-channel fg/bg and 1-channel alpha, got fg " +
                  fg.shape().str() + ", alpha " + alpha.shape().str() + ", bg " +
                  bg.shape().str());
  check_shape(fg.dim(0) == alpha.dim(0) && fg.dim(0) == bg.dim(0) &&
                  fg.dim(2) == alpha.dim(2) && fg.dim(3) == alpha.dim(3) &&
                  fg.dim(2) == bg.dim(2) && fg.dim(3) == bg.dim(3),
              "composite: extent mismatch: fg " + fg.shape().str() + ", alpha " +
                  alpha.shape().str() + ", bg " + bg.shape().str());

  auto out = composite(fg, alpha, bg);
  if (dirs)
    save_clip_dir(o.out, {{"composite", out}});
  else
    save_png(o.out, out.squeeze0());

  RunManifest m;
  m.command = "composite";
  m.inputs = {{"fg", o.fg}, {"alpha", o.alpha}, {"bg", o.bg}};
  m.outputs["composite"] = o.out;
  m.options["mode"] = dirs ? "clip" : "image";
  m.write(manifest_path_for(o.out, dirs));
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::uint64_t seed = 1;
  int clips = 1;
  int frames = 8;
  int height = 128;
  int width = 128;
  std::string out;
};

inline void run_synth(const SynthOptions& o) {
  check(o.clips >= 1, "synth: need at least one clip");
  std::vector<std::string> names;
  for (int c = 0; c < o.clips; ++c) {
    auto clip = synth_matting_clip<float>(o.seed * 1000003ull + static_cast<std::uint64_t>(c),
                                          o.frames, o.height, o.width);
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", c);
    save_clip_dir((fs::path(o.out) / name).string(), {{"frame", clip.frames},
                                                      {"alpha", clip.alpha_gt},
                                                      {"fg", clip.fg_gt},
                                                      {"bg", clip.bg},
                                                      {"seg", clip.seg_gt}});
    names.push_back(name);
  }
  RunManifest m;
  m.command = "synth";
  m.seed = o.seed;
  m.outputs["dataset"] = o.out;
  m.options = {{"clips", o.clips}, {"frames", o.frames},
               {"height", o.height}, {"width", o.width}};
  m.options["names"] = names;
  m.write(manifest_path_for(o.out, true));
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string profile = "desk";  // "desk" or "paper"
  std::string stages = "1";      // "1", "1-3", "1,2,4"
  std::string config;            // optional JSON config file
  std::string resume;            // optional checkpoint to continue from
  std::string out = "train_out";
  std::string model;  // "", "tiny", or "default"; empty = profile default
  std::uint64_t seed = 7;
  int iterations = 0;  // per-epoch override; 0 keeps the profile value
  bool augment = false;
};

namespace detail {

inline std::vector<int> parse_stages(const std::string& spec) {
  std::vector<int> stages;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      stages.push_back(std::stoi(part));
    } else {
      const int lo = std::stoi(part.substr(0, dash));
      const int hi = std::stoi(part.substr(dash + 1));
      check(lo <= hi, "train: bad stage range '" + part + "'");
      for (int s = lo; s <= hi; ++s) stages.push_back(s);
    }
  }
  check(!stages.empty(), "train: empty stage list");
  for (size_t i = 1; i < stages.size(); ++i)
    check(stages[i] > stages[i - 1], "train: stages must be strictly increasing");
  for (int s : stages) check(s >= 1 && s <= 4, "train: stage must be 1..4");
  return stages;
}

inline void apply_stage_overrides(StageConfig& cfg, const json& j) {
  if (j.contains("frames")) cfg.frames = j.at("frames").get<int>();
  if (j.contains("hires_frames")) cfg.hires_frames = j.at("hires_frames").get<int>();
  if (j.contains("batch")) cfg.batch = j.at("batch").get<int>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
  if (j.contains("res_lo")) cfg.res_lo = j.at("res_lo").get<int>();
  if (j.contains("res_hi")) cfg.res_hi = j.at("res_hi").get<int>();
  if (j.contains("hires_lo")) cfg.hires_lo = j.at("hires_lo").get<int>();
  if (j.contains("hires_hi")) cfg.hires_hi = j.at("hires_hi").get<int>();
  if (j.contains("downsample")) cfg.downsample = j.at("downsample").get<double>();
  if (j.contains("segmentation")) cfg.segmentation = j.at("segmentation").get<bool>();
  if (j.contains("budget_mib"))
    cfg.memory_budget = j.at("budget_mib").get<std::size_t>() << 20;
}

}  // namespace detail

inline void run_train(const TrainOptions& o) {
  check(o.profile == "desk" || o.profile == "paper",
        "train: --profile must be 'desk' or 'paper'");
  const auto stages = detail::parse_stages(o.stages);

  json cfg_json = json::object();
  if (!o.config.empty()) {
    std::ifstream is(o.config);
    if (!is) throw IoError("cannot open config " + o.config);
    try {
      is >> cfg_json;
    } catch (const json::exception& e) {
      throw ValueError(o.config + ": " + e.what());
    }
  }

  std::string model_kind = o.model;
  if (model_kind.empty())
    model_kind = cfg_json.value("model", o.profile == "desk" ? "tiny" : "default");
  check(model_kind == "tiny" || model_kind == "default",
        "train: model must be 'tiny' or 'default'");
  const auto mc =
      model_kind == "tiny" ? ModelConfig::tiny_test() : ModelConfig::defaults();

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create " + o.out + ": " + ec.message());

  auto model = build_model<float>(mc, o.seed);
  const auto first = paper_profile(stages.front());
  AdamOptimizer<float> opt(model, {first.lr_backbone, first.lr_decoder, first.lr_dgf});

  int completed_stage = 0;
  if (!o.resume.empty()) {
    const auto meta = load_checkpoint(o.resume, model, &opt);
    completed_stage = meta.stage;
  }

  auto source = synthetic_source<float>(o.augment);
  std::ofstream log_os(fs::path(o.out) / "train_log.txt",
                       o.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log_os) throw IoError("cannot write training log in " + o.out);

  std::vector<int> ran;
  std::string last_ckpt;
  for (int s : stages) {
    if (s <= completed_stage) continue;
    StageConfig cfg = o.profile == "paper" ? paper_profile(s) : desk_profile(s);
    if (o.iterations > 0) cfg.iterations = o.iterations;
    if (cfg_json.contains("overrides")) {
      const auto key = std::to_string(s);
      if (cfg_json.at("overrides").contains(key))
        detail::apply_stage_overrides(cfg, cfg_json.at("overrides").at(key));
    }
    // Stage-local seeding keeps a resumed stage's data stream identical to
    // the same stage in an uninterrupted run.
    const auto log = run_stage(model, opt, cfg, source,
                               o.seed * 1315423911ull + static_cast<std::uint64_t>(s));
    for (const auto& line : log.lines()) log_os << "stage=" << s << " " << line << "\n";
    log_os.flush();

    char name[32];
    std::snprintf(name, sizeof(name), "stage%d.ckpt", s);
    last_ckpt = (fs::path(o.out) / name).string();
    save_checkpoint(last_ckpt, model, &opt, s,
                    static_cast<std::uint64_t>(cfg.epochs) * cfg.iterations);
    ran.push_back(s);
  }

  RunManifest m;
  m.command = "train";
  m.config_path = o.config;
  m.checkpoint_path = o.resume;
  m.seed = o.seed;
  m.outputs["dir"] = o.out;
  if (!last_ckpt.empty()) m.outputs["checkpoint"] = last_ckpt;
  m.options = {{"profile", o.profile}, {"stages", o.stages}, {"model", model_kind},
               {"iterations", o.iterations}, {"augment", o.augment}};
  m.options["ran_stages"] = ran;
  m.write(manifest_path_for(o.out, true));
}

// Maps an action's exceptions onto the tool's stable exit codes:
// 0 success, 2 contract/precondition violation, 3 I/O failure.
template <typename F>
int dispatch(F&& action) {
  try {
    action();
    return 0;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace vmatt::cli
