#include <string>

#include "doctest.h"
#include "vdm/config.hpp"

using namespace vdm;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig cfg = parse_run_config("");
  CHECK(cfg.training.objective.lambda_perceptual == 0.5);
  CHECK(cfg.training.objective.lambda_temporal == 50.0);
  CHECK(cfg.training.objective.scales.sizes() == std::vector<int>{1, 3, 5, 7});
  CHECK(cfg.training.objective.temporal_loss_kind == TemporalLossKind::kRelationMultiscale);
  CHECK(cfg.training.base_lr == 2e-4);
}

TEST_CASE("parsing sections, comments and lists") {
  const RunConfig cfg = parse_run_config(
      "# experiment\n"
      "seed = 42\n"
      "[synth]\n"
      "frames = 9   # short clips\n"
      "moire_frequencies = 0.1:0.2, 0.3:0.05\n"
      "\n"
      "[objective]\n"
      "scales = 1, 3\n"
      "temporal_loss = relation_basic\n"
      "[training]\n"
      "single_frame = true\n"
      "lambda_sweep = 0, 10, 50\n");
  CHECK(cfg.seed == 42);
  CHECK(cfg.synth.frames == 9);
  REQUIRE(cfg.synth.moire_frequencies.size() == 2);
  CHECK(cfg.synth.moire_frequencies[1].fx == 0.3);
  CHECK(cfg.training.objective.scales.sizes() == std::vector<int>{1, 3});
  CHECK(cfg.training.objective.temporal_loss_kind == TemporalLossKind::kRelationBasic);
  CHECK(cfg.training.single_frame);
  CHECK(cfg.lambda_sweep == std::vector<double>{0.0, 10.0, 50.0});
}

TEST_CASE("one master seed drives every random source") {
  const RunConfig a = parse_run_config("seed = 5\n");
  const RunConfig b = parse_run_config("seed = 6\n");
  CHECK(a.synth.seed == 5);
  CHECK(a.training.seed == 5);
  CHECK(a.training.model.seed != b.training.model.seed);
  CHECK(a.training.extractor.seed != b.training.extractor.seed);
  CHECK(a.alignment.ransac.seed != b.alignment.ransac.seed);
  CHECK(clip_seed(5, 0) != clip_seed(5, 1));
}

TEST_CASE("serialization round-trips exactly") {
  RunConfig cfg = parse_run_config("seed = 9\n[synth]\nmotion_x = 0.1\n[training]\nbase_lr = 0.00123456789\n");
  const std::string text = serialize(cfg);
  const RunConfig back = parse_run_config(text);
  CHECK(serialize(back) == text);
  CHECK(back.synth.motion_x == 0.1);
  CHECK(back.training.base_lr == 0.00123456789);
  CHECK(text.find("[alignment]") != std::string::npos);
  CHECK(text.find("lambda_temporal = 50") != std::string::npos);
}

TEST_CASE("invalid configs report the line") {
  CHECK(error_of("[synth]\nframes = 4\nbogus = 1\n").find("line 3") != std::string::npos);
  CHECK(error_of("[nowhere]\n").find("line 1") != std::string::npos);
  CHECK(error_of("frames = 4\n").find("line 1") != std::string::npos);
  CHECK(error_of("[synth]\nframes = four\n").find("line 2") != std::string::npos);
  CHECK(error_of("[synth]\nframes 4\n").find("line 2") != std::string::npos);
  CHECK(error_of("[synth]\nframes = 4\nframes = 5\n").find("line 3") != std::string::npos);
  CHECK(error_of("[objective]\nscales = 1, 4\n").find("line 2") != std::string::npos);
  CHECK(error_of("[objective]\ntemporal_loss = optical\n").find("line 2") != std::string::npos);
  CHECK(error_of("[synth]\nframes = -3\n").find("line 2") != std::string::npos);
  CHECK(error_of("[training]\ncrop = 6\n").find("line 2") != std::string::npos);
  CHECK(error_of("[training]\nsingle_frame = maybe\n").find("line 2") != std::string::npos);
}

TEST_CASE("cross-field checks settle after the whole file") {
  CHECK_NOTHROW(parse_run_config("[training]\ntemporal_start_epoch = 80\nepochs = 100\n"));
  CHECK(error_of("[training]\nepochs = 10\ntemporal_start_epoch = 20\n").find("line 3") != std::string::npos);
}
