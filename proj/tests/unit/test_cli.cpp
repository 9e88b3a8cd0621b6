#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "../oracles.hpp"
#include "../test_util.hpp"
#include "vdm/config.hpp"
#include "vdm/image_io.hpp"
#include "vdm/metrics.hpp"

using namespace vdm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run_cli(const testutil::TempDir& dir, const std::string& args) {
  static int n = 0;
  const fs::path out = dir / ("stdout_" + std::to_string(n));
  const fs::path err = dir / ("stderr_" + std::to_string(n++));
  const std::string cmd = std::string(VDM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::read_bytes(out), testutil::read_bytes(err)};
}

std::string p(const fs::path& path) { return "'" + path.string() + "'"; }

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

double value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size()));
}

const char* kSmallSynth =
    "seed = 3\n[synth]\nclips = 2\nframes = 4\nheight = 16\nwidth = 16\n"
    "[training]\nepochs = 3\nfeatures = 4\nbase_lr = 0.002\n";

}  // namespace

TEST_CASE("cli: synth is deterministic and the manifest re-parses") {
  testutil::TempDir dir;
  write_text(dir / "run.cfg", kSmallSynth);
  REQUIRE(run_cli(dir, "synth --config " + p(dir / "run.cfg") + " --out " + p(dir / "a")).code == 0);
  REQUIRE(run_cli(dir, "synth --config " + p(dir / "run.cfg") + " --out " + p(dir / "b")).code == 0);
  for (const char* rel : {"clip_000/clean/frame_00000.png", "clip_001/degraded/frame_00003.png"}) {
    CHECK(testutil::read_bytes(dir / "a" / rel) == testutil::read_bytes(dir / "b" / rel));
  }
  CHECK_FALSE(fs::exists(dir / "a" / "clip_002"));
  const RunConfig original = load_run_config(dir / "run.cfg");
  CHECK(serialize(load_run_config(dir / "a" / "manifest.txt")) == serialize(original));
  CHECK(serialize(load_run_config(dir / "a" / "resolved_config.txt")) == serialize(original));

  write_text(dir / "flat.cfg",
             "[synth]\nclips = 1\nframes = 3\nheight = 16\nwidth = 16\nmoire_amplitude = 0\nflicker_amplitude = 0\n");
  REQUIRE(run_cli(dir, "synth --config " + p(dir / "flat.cfg") + " --out " + p(dir / "flat")).code == 0);
  for (int i = 0; i < 3; ++i) {
    const std::string name = frame_filename(i);
    CHECK(testutil::read_bytes(dir / "flat/clip_000/clean" / name) ==
          testutil::read_bytes(dir / "flat/clip_000/degraded" / name));
  }
}

TEST_CASE("cli: bad configs fail with a line number") {
  testutil::TempDir dir;
  write_text(dir / "bad.cfg", "[training]\nepochs = 3\nlearning_rate = 1\n");
  const Run r = run_cli(dir, "synth --config " + p(dir / "bad.cfg") + " --out " + p(dir / "x"));
  CHECK(r.code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK(run_cli(dir, "synth").code != 0);
  CHECK(run_cli(dir, "nonsense").code != 0);
}

TEST_CASE("cli: loss") {
  testutil::TempDir dir;
  write_text(dir / "run.cfg", kSmallSynth);
  REQUIRE(run_cli(dir, "synth --config " + p(dir / "run.cfg") + " --out " + p(dir / "d")).code == 0);
  const fs::path clean = dir / "d/clip_000/clean";
  const fs::path degraded = dir / "d/clip_000/degraded";

  const Run same = run_cli(dir, "loss --pred " + p(clean) + " --gt " + p(clean) + " --kind relation_multiscale");
  REQUIRE(same.code == 0);
  CHECK(value_after(same.out, "mean ") == 0.0);

  write_text(dir / "one.cfg", "[objective]\nscales = 1\n");
  const Run ms = run_cli(dir, "loss --config " + p(dir / "one.cfg") + " --pred " + p(degraded) + " --gt " + p(clean) +
                                  " --kind relation_multiscale");
  const Run basic = run_cli(dir, "loss --pred " + p(degraded) + " --gt " + p(clean) + " --kind relation_basic");
  REQUIRE(ms.code == 0);
  REQUIRE(basic.code == 0);
  CHECK(value_after(ms.out, "mean ") == value_after(basic.out, "mean "));
  CHECK(value_after(basic.out, "mean ") > 0.0);

  const Run maps = run_cli(dir, "loss --pred " + p(degraded) + " --gt " + p(clean) + " --scale-map " + p(dir / "maps"));
  REQUIRE(maps.code == 0);
  CHECK(fs::exists(dir / "maps" / "scale_map_00002.png"));

  CHECK(run_cli(dir, "loss --pred " + p(degraded) + " --gt " + p(clean) + " --kind flow").code == 0);
  CHECK(run_cli(dir, "loss --pred " + p(degraded) + " --gt " + p(dir / "missing")).code == 1);
}

TEST_CASE("cli: loss on a 1x1 fixture") {
  testutil::TempDir dir;
  // Values on the 8-bit grid: O = (51, 127), G = (26, 76) / 255.
  const auto frame = [](double v) { return Frame(1, 1, 1, v / 255.0); };
  save_clip_dir(VideoClip{{frame(51), frame(127)}}, dir / "pred");
  save_clip_dir(VideoClip{{frame(26), frame(76)}}, dir / "gt");
  const Run r = run_cli(dir, "loss --pred " + p(dir / "pred") + " --gt " + p(dir / "gt") + " --kind relation_basic");
  REQUIRE(r.code == 0);
  CHECK(value_after(r.out, "mean ") == doctest::Approx(26.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("cli: flow and metrics") {
  testutil::TempDir dir;
  Rng rng(6);
  const Frame still = oracle::random_frame(rng, 16, 16, 3);
  save_clip_dir(VideoClip{{still, still, still}}, dir / "static");

  const Run same = run_cli(dir, "metrics --pred " + p(dir / "static") + " --gt " + p(dir / "static") + " --out " +
                                    p(dir / "m"));
  REQUIRE(same.code == 0);
  CHECK(value_after(same.out, "warping_error_mean ") == 0.0);
  std::ifstream rows(dir / "m" / "frame_metrics.csv");
  std::string line;
  std::getline(rows, line);
  for (int i = 0; i < 3; ++i) {
    std::getline(rows, line);
    CHECK(line.rfind(std::to_string(i) + ",100,1", 0) == 0);
  }
  CHECK(fs::exists(dir / "m" / "resolved_config.txt"));

  VideoClip gt, pred;
  for (int i = 0; i < 3; ++i) {
    gt.frames.push_back(oracle::random_frame(rng, 16, 16, 3));
    pred.frames.push_back(oracle::random_frame(rng, 16, 16, 3));
  }
  save_clip_dir(gt, dir / "gt", 16);
  save_clip_dir(pred, dir / "pred", 16);
  REQUIRE(run_cli(dir, "flow --clip " + p(dir / "gt") + " --out " + p(dir / "flows")).code == 0);
  CHECK(fs::exists(dir / "flows" / "flow_00001.flo"));
  CHECK(fs::exists(dir / "flows" / "flow_fwd_00001.flo"));
  CHECK(fs::exists(dir / "flows" / "mask_00000.png"));

  const Run scored = run_cli(dir, "metrics --pred " + p(dir / "pred") + " --gt " + p(dir / "gt") + " --flow-dir " +
                                      p(dir / "flows") + " --out " + p(dir / "m2"));
  REQUIRE(scored.code == 0);
  const VideoClip pred_q = load_clip_dir(dir / "pred");
  const VideoClip gt_q = load_clip_dir(dir / "gt");
  CHECK(value_after(scored.out, "psnr_mean ") == doctest::Approx(psnr_report(pred_q, gt_q).mean).epsilon(1e-8));
  CHECK(value_after(scored.out, "ssim_mean ") == doctest::Approx(ssim_report(pred_q, gt_q).mean).epsilon(1e-8));
  CHECK(value_after(scored.out, "warping_error_mean ") ==
        doctest::Approx(warping_report(pred_q, estimate_clip_flows(gt_q)).mean).epsilon(1e-8));
}

TEST_CASE("cli: align") {
  testutil::TempDir dir;
  Rng rng(8);
  VideoClip source, captured;
  captured.frames.assign(2, Frame(64, 64, 3, 1.0));
  for (int i = 0; i < 2; ++i) {
    source.frames.push_back(oracle::mosaic(rng, 64, 64));
    for (int r = 0; r < 3; ++r) captured.frames.push_back(source.frames.back());
  }
  captured.frames.push_back(Frame(64, 64, 3, 1.0));
  captured.frames.push_back(Frame(64, 64, 3, 1.0));
  save_clip_dir(source, dir / "source", 16);
  save_clip_dir(captured, dir / "captured", 16);

  const Run r = run_cli(dir, "align --captured " + p(dir / "captured") + " --source " + p(dir / "source") +
                                 " --out " + p(dir / "out"));
  REQUIRE(r.code == 0);
  CHECK(load_clip_dir(dir / "out" / "aligned").size() == 2);
  std::ifstream report(dir / "out" / "alignment.csv");
  std::string line;
  std::getline(report, line);
  int rows = 0;
  while (std::getline(report, line)) {
    std::stringstream row(line);
    std::vector<double> v;
    for (std::string cell; std::getline(row, cell, ',');) v.push_back(std::stod(cell));
    REQUIRE(v.size() == 13);
    CHECK(v[3] < 0.5);
    const double identity[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int k = 0; k < 9; ++k) CHECK(std::abs(v[4 + k] - identity[k]) < 1e-3);
    ++rows;
  }
  CHECK(rows == 2);

  save_clip_dir(source, dir / "no_flags", 16);
  const Run missing = run_cli(dir, "align --captured " + p(dir / "no_flags") + " --source " + p(dir / "source") +
                                       " --out " + p(dir / "out2"));
  CHECK(missing.code == 1);
  CHECK(missing.err.find("flag") != std::string::npos);
}

TEST_CASE("cli: train, sweep, resume and eval") {
  testutil::TempDir dir;
  write_text(dir / "run.cfg", std::string(kSmallSynth) + "checkpoint_every = 1\n");
  REQUIRE(run_cli(dir, "synth --config " + p(dir / "run.cfg") + " --out " + p(dir / "d")).code == 0);

  const std::string base = "train --config " + p(dir / "run.cfg") + " --data " + p(dir / "d");
  REQUIRE(run_cli(dir, base + " --out " + p(dir / "t1")).code == 0);
  REQUIRE(run_cli(dir, base + " --out " + p(dir / "t2")).code == 0);
  CHECK(testutil::read_bytes(dir / "t1/checkpoint.trlt") == testutil::read_bytes(dir / "t2/checkpoint.trlt"));
  CHECK(fs::exists(dir / "t1/training_log.csv"));
  CHECK(fs::exists(dir / "t1/report.txt"));
  CHECK(fs::exists(dir / "t1/resolved_config.txt"));

  REQUIRE(run_cli(dir, base + " --out " + p(dir / "t3") + " --resume " + p(dir / "t1/checkpoint_epoch_0001.trlt")).code == 0);
  CHECK(testutil::read_bytes(dir / "t3/checkpoint.trlt") == testutil::read_bytes(dir / "t1/checkpoint.trlt"));

  write_text(dir / "sweep.cfg", std::string(kSmallSynth) + "lambda_sweep = 0, 50\n");
  REQUIRE(run_cli(dir, "train --config " + p(dir / "sweep.cfg") + " --data " + p(dir / "d") + " --eval-data " +
                           p(dir / "d/clip_001") + " --out " + p(dir / "sweep")).code == 0);
  CHECK(fs::exists(dir / "sweep/lambda_0/report.txt"));
  CHECK(fs::exists(dir / "sweep/lambda_50/report.txt"));
  const std::string summary = testutil::read_bytes(dir / "sweep/sweep_summary.csv");
  CHECK(summary.rfind("lambda_temporal,psnr,ssim,warping_error\n0,", 0) == 0);
  CHECK(summary.find("\n50,") != std::string::npos);
  CHECK(load_run_config(dir / "sweep/lambda_50/resolved_config.txt").training.objective.lambda_temporal == 50.0);

  const Run e1 = run_cli(dir, "eval --data " + p(dir / "d") + " --checkpoint " + p(dir / "t1/checkpoint.trlt") +
                                  " --out " + p(dir / "e1"));
  const Run e2 = run_cli(dir, "eval --data " + p(dir / "d") + " --checkpoint " + p(dir / "t1/checkpoint.trlt") +
                                  " --out " + p(dir / "e2"));
  REQUIRE(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(testutil::read_bytes(dir / "e1/report.txt") == testutil::read_bytes(dir / "e2/report.txt"));
  CHECK(fs::exists(dir / "e1/restored/clip_001/frame_00003.png"));
  CHECK(fs::exists(dir / "e1/clip_000/frame_metrics.csv"));
  CHECK(fs::exists(dir / "e1/clip_000/warping.csv"));
}
