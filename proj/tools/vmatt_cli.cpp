#include <CLI11.hpp>

#include "vmatt/cli.hpp"

namespace {

bool on_off(const std::string& v, const char* flag) {
  vmatt::check(v == "on" || v == "off",
               std::string(flag) + " takes 'on' or 'off', got '" + v + "'");
  return v == "on";
}

std::pair<int, int> parse_resolution(const std::string& v) {
  const auto x = v.find('x');
  vmatt::check(x != std::string::npos && x > 0 && x + 1 < v.size(),
               "--resolution takes HxW, e.g. 256x256, got '" + v + "'");
  return {std::stoi(v.substr(0, x)), std::stoi(v.substr(x + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  using namespace vmatt::cli;
  CLI::App app{"vmatt: recurrent video human matting"};
  app.require_subcommand(1);

  InferOptions infer;
  std::string infer_dgf = "off", infer_streaming = "off";
  auto* ci = app.add_subcommand("infer", "Matte a frame sequence with a trained model");
  ci->add_option("--checkpoint", infer.checkpoint, "trained checkpoint file")->required();
  ci->add_option("--input", infer.input, "clip directory or raw planar video file")
      ->required();
  ci->add_option("--output", infer.output, "output clip directory")->required();
  ci->add_option("--background", infer.background, "PNG to composite the result over");
  ci->add_option("--downsample", infer.downsample,
                 "internal downsample factor s in (0,1]");
  ci->add_option("--dgf", infer_dgf, "guided-filter refinement: on|off");
  ci->add_option("--streaming", infer_streaming,
                 "frame-by-frame with carried state: on|off");
  ci->callback([&] {
    infer.dgf = on_off(infer_dgf, "--dgf");
    infer.streaming = on_off(infer_streaming, "--streaming");
    run_infer(infer);
  });

  EvalOptions eval;
  auto* ce = app.add_subcommand("eval", "Score predictions against ground truth");
  ce->add_option("--pred", eval.pred, "prediction clip dir (or folder of clips)")
      ->required();
  ce->add_option("--gt", eval.gt, "ground-truth clip dir (or folder of clips)")
      ->required();
  ce->add_option("--report", eval.report, "report file to write")->required();
  ce->add_option("--metrics", eval.metrics,
                 "subset of mad,mse,grad,conn,dtssd,fgmse,miou (default: all)")
      ->delimiter(',');
  ce->add_option("--frame-mad", eval.frame_mad, "optional per-frame MAD trace file");
  ce->callback([&] { run_eval(eval); });

  BenchOptions bench;
  std::string bench_res = "256x256";
  auto* cb = app.add_subcommand("bench", "Measure throughput, parameters, and MACs");
  cb->add_option("--config", bench.config, "model configuration: default|tiny");
  cb->add_option("--resolution", bench_res, "input extents as HxW");
  cb->add_option("--downsample", bench.downsample, "downsample factor s");
  cb->add_option("--frames", bench.frames, "timed frames (after warmup)");
  cb->add_option("--threads", bench.threads, "worker threads (0 = current)");
  cb->add_option("--out", bench.out, "report file");
  cb->callback([&] {
    std::tie(bench.height, bench.width) = parse_resolution(bench_res);
    run_bench(bench);
  });

  CompositeOptions comp;
  auto* cc = app.add_subcommand("composite", "Blend foreground over background by alpha");
  cc->add_option("--fg", comp.fg, "foreground PNG or clip dir")->required();
  cc->add_option("--alpha", comp.alpha, "alpha PNG or clip dir")->required();
  cc->add_option("--bg", comp.bg, "background PNG or clip dir")->required();
  cc->add_option("--out", comp.out, "output PNG or clip dir")->required();
  cc->callback([&] { run_composite(comp); });

  SynthOptions synth;
  auto* cs = app.add_subcommand("synth", "Emit a synthetic matting dataset");
  cs->add_option("--seed", synth.seed, "generator seed");
  cs->add_option("--clips", synth.clips, "number of clips");
  cs->add_option("--frames", synth.frames, "frames per clip");
  cs->add_option("--height", synth.height, "frame height (multiple of 16)");
  cs->add_option("--width", synth.width, "frame width (multiple of 16)");
  cs->add_option("--out", synth.out, "output dataset directory")->required();
  cs->callback([&] { run_synth(synth); });

  TrainOptions train;
  std::string train_augment = "off";
  auto* ct = app.add_subcommand("train", "Run the staged training schedule");
  ct->add_option("--profile", train.profile, "desk|paper");
  ct->add_option("--stages", train.stages, "e.g. 1, 1-3, or 1,2,4");
  ct->add_option("--config", train.config, "JSON config file (see docs/formats.md)");
  ct->add_option("--resume", train.resume, "checkpoint to continue from");
  ct->add_option("--out", train.out, "output directory");
  ct->add_option("--model", train.model, "tiny|default (default: per profile)");
  ct->add_option("--seed", train.seed, "training seed");
  ct->add_option("--iterations", train.iterations, "iterations per epoch override");
  ct->add_option("--augment", train_augment, "randomized clip augmentation: on|off");
  ct->callback([&] {
    train.augment = on_off(train_augment, "--augment");
    run_train(train);
  });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or requested help
    return code == 0 ? 0 : 2;
  } catch (...) {
    return dispatch([] { throw; });  // 2 for contract errors, 3 for I/O
  }
}
