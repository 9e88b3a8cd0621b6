#include <cmath>

#include "doctest.h"
#include "../oracles.hpp"
#include "../test_util.hpp"
#include "vdm/experiment.hpp"
#include "vdm/toy_net.hpp"

using namespace vdm;

namespace {

ToyModelConfig tiny_config(bool zero_heads = false) {
  ToyModelConfig cfg;
  cfg.features = 4;
  cfg.encoder_layers = 2;
  cfg.fusion_layers = 1;
  cfg.seed = 17;
  cfg.zero_heads = zero_heads;
  return cfg;
}

FrameWindow random_window(Rng& rng, int h, int w) {
  return {oracle::random_frame(rng, h, w, 3), oracle::random_frame(rng, h, w, 3), oracle::random_frame(rng, h, w, 3)};
}

std::vector<Frame> random_like(Rng& rng, const ScaledOutputs& outs) {
  std::vector<Frame> g;
  for (const Frame& f : outs.levels) g.push_back(oracle::random_frame(rng, f.height, f.width, f.channels, -1, 1));
  return g;
}

double dot_outputs(const ScaledOutputs& outs, const std::vector<Frame>& probe) {
  double s = 0.0;
  for (std::size_t l = 0; l < outs.levels.size(); ++l)
    for (std::size_t i = 0; i < outs.levels[l].size(); ++i) s += outs.levels[l].data[i] * probe[l].data[i];
  return s;
}

bool same_parameters(const ToyModel& a, const ToyModel& b) {
  const auto la = a.layers();
  const auto lb = b.layers();
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i].second->weight != lb[i].second->weight || la[i].second->bias != lb[i].second->bias) return false;
  }
  return true;
}

std::vector<TrainingPair> tiny_dataset(std::size_t clips, int size, int frames) {
  SynthConfig s;
  s.height = s.width = size;
  s.frames = frames;
  return synthetic_dataset(s, 3, 0, clips);
}

}  // namespace

TEST_CASE("windows replicate clip ends") {
  VideoClip clip;
  for (int i = 0; i < 4; ++i) clip.frames.push_back(Frame(1, 1, 1, i));
  const FrameWindow first = window_at(clip, 0);
  CHECK(first[0].data[0] == 0.0);
  CHECK(first[1].data[0] == 0.0);
  CHECK(first[2].data[0] == 1.0);
  const FrameWindow last = window_at(clip, 3);
  CHECK(last[0].data[0] == 2.0);
  CHECK(last[2].data[0] == 3.0);
  CHECK_THROWS_AS(window_at(clip, 4), Error);
  const FrameWindow single = single_frame_window(clip[2]);
  for (const Frame& f : single) CHECK(f.data[0] == 2.0);
}

TEST_CASE("forward pass structure") {
  Rng rng(1);
  const ToyModel model(tiny_config());
  const FrameWindow w = random_window(rng, 8, 12);
  const ForwardResult r = forward(model, w);
  REQUIRE(r.outputs.levels.size() == 3);
  CHECK(r.outputs.levels[0].height == 8);
  CHECK(r.outputs.levels[1].width == 6);
  CHECK(r.outputs.levels[2].height == 2);
  CHECK_NOTHROW(r.outputs.validate());

  const std::size_t plane = r.weights.plane();
  CHECK(r.weights.channels == 3);
  for (std::size_t p = 0; p < plane; ++p) {
    const double a = r.weights.data[p], b = r.weights.data[plane + p], c = r.weights.data[2 * plane + p];
    CHECK(a + b + c == doctest::Approx(1.0).epsilon(1e-14));
    for (double v : {a, b, c}) CHECK((v > 0.0 && v < 1.0));
  }

  CHECK_THROWS_AS(forward(model, random_window(rng, 6, 8)), Error);
  FrameWindow mixed = w;
  mixed[0] = Frame(8, 12, 1);
  CHECK_THROWS_AS(forward(model, mixed), Error);
}

TEST_CASE("zero heads start as the identity on the centre frame") {
  Rng rng(2);
  const ToyModel model(tiny_config(true));
  const FrameWindow w = random_window(rng, 8, 8);
  const ForwardResult r = forward(model, w);
  CHECK(r.outputs.levels[0].data == w[1].data);
  CHECK(r.outputs.levels[1].data == downsample_half(w[1]).data);
}

TEST_CASE("identical frames: permutation invariance and no weight-head gradient") {
  Rng rng(3);
  const ToyModel model(tiny_config());
  const Frame f = oracle::random_frame(rng, 8, 8, 3);
  const ForwardResult r = forward(model, single_frame_window(f));
  FrameWindow swapped = single_frame_window(f);
  std::swap(swapped[0], swapped[2]);
  CHECK(forward(model, swapped).outputs.levels[0].data == r.outputs.levels[0].data);

  // Blended features equal the shared features whatever the weights, so the weight head gets
  // no gradient.
  const ToyModel g = backward(model, r.cache, random_like(rng, r.outputs));
  for (const auto& [name, layer] : g.layers()) {
    if (name != "weight_head") continue;
    for (double v : layer->weight) CHECK(std::abs(v) < 1e-12);
    for (double v : layer->bias) CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("backward matches finite differences on every parameter group") {
  Rng rng(4);
  ToyModel model(tiny_config());
  const FrameWindow w = random_window(rng, 8, 8);
  const ForwardResult r = forward(model, w);
  const std::vector<Frame> probe = random_like(rng, r.outputs);
  const ToyModel grads = backward(model, r.cache, probe);

  auto params = model.layers();
  const auto gl = grads.layers();
  for (std::size_t li = 0; li < params.size(); ++li) {
    for (bool bias : {false, true}) {
      std::vector<double>& values = bias ? params[li].second->bias : params[li].second->weight;
      const std::vector<double>& analytic = bias ? gl[li].second->bias : gl[li].second->weight;
      std::vector<std::size_t> coords;
      for (int k = 0; k < 6; ++k) coords.push_back(rng.below(values.size()));
      const auto f = [&](const std::vector<double>& x) {
        const std::vector<double> keep = values;
        values = x;
        const double v = dot_outputs(forward(model, w).outputs, probe);
        values = keep;
        return v;
      };
      const oracle::FdStats s = oracle::finite_difference_check(f, values, analytic, coords);
      INFO("layer " << params[li].first << (bias ? " bias" : " weight"));
      CHECK(s.max_rel_error < 1e-4);
      CHECK(s.checked >= 3);
    }
  }
}

TEST_CASE("backward edge cases") {
  Rng rng(5);
  ToyModel model(tiny_config());
  const ForwardResult r = forward(model, random_window(rng, 8, 8));
  std::vector<Frame> zero;
  for (const Frame& f : r.outputs.levels) zero.emplace_back(f.height, f.width, f.channels);
  ToyModel grads = backward(model, r.cache, zero);
  for (const auto& [name, layer] : grads.layers()) {
    for (double v : layer->weight) CHECK(v == 0.0);
    for (double v : layer->bias) CHECK(v == 0.0);
  }
  model.bump_version();
  CHECK_THROWS_AS(backward(model, r.cache, zero), Error);
}

TEST_CASE("adam and the learning-rate schedule") {
  CHECK(cosine_learning_rate(2e-4, 0.0, 0, 10) == 2e-4);
  CHECK(cosine_learning_rate(2e-4, 0.0, 5, 10) == doctest::Approx(1e-4));
  CHECK(cosine_learning_rate(2e-4, 1e-5, 10, 10) == doctest::Approx(1e-5));

  ToyModel model(tiny_config());
  const ToyModel before = model;
  Adam adam(model);
  ToyModel grads = model.zeros_like();
  for (auto& [name, layer] : grads.layers()) std::fill(layer->weight.begin(), layer->weight.end(), 0.5);
  adam.step(model, grads, 0.0);
  CHECK(same_parameters(model, before));
  CHECK(adam.steps() == 1);
  adam.step(model, grads, 1e-3);
  // The first bias-corrected Adam step moves each parameter by lr * sign(g).
  const auto a = model.layers();
  const auto b = before.layers();
  CHECK(a[0].second->weight[0] == doctest::Approx(b[0].second->weight[0] - 1e-3).epsilon(1e-6));
  CHECK(a[0].second->bias[0] == b[0].second->bias[0]);
}

TEST_CASE("training") {
  const std::vector<TrainingPair> data = tiny_dataset(1, 16, 4);
  TrainConfig cfg;
  cfg.model = tiny_config(true);
  cfg.epochs = 4;
  cfg.base_lr = 3e-3;

  SUBCASE("zero learning rate keeps the parameters and still logs") {
    TrainConfig z = cfg;
    z.base_lr = 0.0;
    const TrainResult r = train(data, z);
    CHECK(same_parameters(r.model, ToyModel(z.model)));
    CHECK(r.log.size() == 4);
  }
  SUBCASE("frame loss decreases over epochs") {
    TrainConfig t = cfg;
    t.epochs = 67;  // 3 pairs per epoch, about 200 steps
    t.objective.lambda_temporal = 0.0;
    const TrainResult r = train(data, t);
    const auto window_mean = [&](std::size_t from) {
      double s = 0.0;
      for (std::size_t e = from; e < from + 10; ++e) s += r.log[e].frame_loss;
      return s / 10;
    };
    CHECK(window_mean(0) > window_mean(28));
    CHECK(window_mean(28) > window_mean(57));
  }
  SUBCASE("same seed and config give identical parameters") {
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(same_parameters(a.model, b.model));
    CHECK(a.log.back().total == b.log.back().total);
  }
  SUBCASE("resuming from a checkpoint reproduces the continued run") {
    TrainConfig t = cfg;
    t.batch_size = 2;
    t.crop = 8;
    t.objective.temporal_loss_kind = TemporalLossKind::kFlow;
    t.temporal_start_epoch = 1;
    Trainer full(data, t);
    full.run_to_end();

    testutil::TempDir dir;
    Trainer first(data, t);
    first.run_epoch();
    first.run_epoch();
    first.save_checkpoint(dir / "mid.trlt");
    Trainer resumed(data, t, read_checkpoint(dir / "mid.trlt"));
    CHECK(resumed.epoch() == 2);
    resumed.run_to_end();
    CHECK(same_parameters(resumed.model(), full.model()));
    REQUIRE(resumed.log().size() == full.log().size());
    CHECK(resumed.log().back().total == full.log().back().total);
  }
  SUBCASE("invalid configurations are rejected") {
    TrainConfig bad = cfg;
    bad.crop = 6;
    CHECK_THROWS_AS(Trainer(data, bad), Error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(Trainer(data, bad), Error);
    CHECK_THROWS_AS(Trainer({}, cfg), Error);
    std::vector<TrainingPair> short_clip = data;
    short_clip[0].degraded.frames.resize(2);
    short_clip[0].clean.frames.resize(2);
    CHECK_THROWS_AS(Trainer(short_clip, cfg), Error);
  }
}

TEST_CASE("model files and evaluation") {
  testutil::TempDir dir;
  const std::vector<TrainingPair> data = tiny_dataset(2, 16, 4);
  ToyModel model(tiny_config());
  save_model(model, dir / "m.trlt");
  const ToyModel back = load_model(dir / "m.trlt");
  CHECK(same_parameters(model, back));
  CHECK(back.config().features == 4);

  std::vector<VideoClip> clean;
  for (const TrainingPair& p : data) clean.push_back(p.clean);
  const EvaluationBundle perfect = evaluate_predictions(clean, data, block_matching_flow_source());
  CHECK(perfect.mean_psnr == kPsnrCap);
  CHECK(perfect.mean_ssim == doctest::Approx(1.0));

  const EvaluationBundle a = evaluate(model, data, block_matching_flow_source(), false, dir.path() / "out");
  const EvaluationBundle b = evaluate(model, data, block_matching_flow_source());
  CHECK(a.mean_psnr == b.mean_psnr);
  CHECK(a.mean_warping == b.mean_warping);
  CHECK(std::filesystem::exists(dir.path() / "out" / "clip_001" / "frame_00003.png"));
  REQUIRE(a.clips.size() == 2);
  CHECK(a.clips[0].psnr.frame_count() == 4);
  CHECK(a.clips[0].warping.frame_count() == 3);
}

TEST_CASE("training improves over the degraded input") {
  const std::vector<TrainingPair> data = tiny_dataset(2, 32, 6);
  TrainConfig cfg;
  cfg.model.features = 8;
  cfg.epochs = 12;
  cfg.base_lr = 2e-3;
  cfg.objective.lambda_temporal = 0.0;
  const TrainResult r = train(data, cfg);
  std::vector<VideoClip> degraded;
  for (const TrainingPair& p : data) degraded.push_back(p.degraded);
  const auto flows = block_matching_flow_source();
  CHECK(evaluate(r.model, data, flows).mean_psnr > evaluate_predictions(degraded, data, flows).mean_psnr);
}

TEST_CASE("trend runs share the pre-temporal epochs without changing results") {
  const std::vector<TrainingPair> data = tiny_dataset(1, 16, 4);
  const std::vector<TrainingPair> test = tiny_dataset(1, 16, 4);
  TrainConfig cfg;
  cfg.model = tiny_config(true);
  cfg.epochs = 6;
  cfg.base_lr = 3e-3;
  cfg.crop = 8;
  const std::vector<TrendVariant> variants{{"flow", TemporalLossKind::kFlow, 5.0, false},
                                           {"multi", TemporalLossKind::kRelationMultiscale, 5.0, false},
                                           {"single", TemporalLossKind::kNone, 0.0, true}};
  const std::vector<TrendOutcome> shared = run_trend(data, test, cfg, variants);
  REQUIRE(shared.size() == 3);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    TrainConfig direct = cfg;
    direct.objective.temporal_loss_kind = variants[i].kind;
    direct.objective.lambda_temporal = variants[i].lambda_temporal;
    direct.single_frame = variants[i].single_frame;
    const TrainResult r = train(data, direct);
    const EvaluationBundle e = evaluate(r.model, test, block_matching_flow_source(), direct.single_frame);
    CHECK(shared[i].psnr == e.mean_psnr);
    CHECK(shared[i].warping == e.mean_warping);
    REQUIRE(shared[i].log.size() == r.log.size());
    CHECK(shared[i].log.back().total == r.log.back().total);
    CHECK(shared[i].log.back().temporal_loss == r.log.back().temporal_loss);
  }
  CHECK(shared[0].log.back().temporal_loss > 0.0);
}
