#include <cmath>

#include "doctest.h"
#include "../oracles.hpp"
#include "vdm/recon_loss.hpp"

using namespace vdm;

namespace {

ScaledOutputs pyramid_of(const Frame& full) { return {gt_pyramid(full, 3)}; }

ScaledOutputs perturbed(const ScaledOutputs& base, Rng& rng, double amount) {
  ScaledOutputs out = base;
  for (Frame& f : out.levels)
    for (double& v : f.data) v += rng.uniform(-amount, amount);
  return out;
}

}  // namespace

TEST_CASE("scaled outputs and ground-truth pyramid") {
  const auto levels = gt_pyramid(Frame(8, 6, 3, 0.5), 3);
  REQUIRE(levels.size() == 3);
  CHECK(levels[1].height == 4);
  CHECK(levels[2].width == 2);
  ScaledOutputs ok{levels};
  CHECK_NOTHROW(ok.validate());
  ScaledOutputs bad{{Frame(8, 8, 3), Frame(3, 4, 3)}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("feature extractor is frozen and deterministic") {
  Rng rng(1);
  const Frame f = oracle::random_frame(rng, 16, 16, 3);
  const FeatureExtractor a(3), b(3);
  const auto fa = a.features(f);
  const auto fb = b.features(f);
  REQUIRE(fa.size() == 3);
  for (std::size_t l = 0; l < fa.size(); ++l) CHECK(fa[l].data == fb[l].data);
  CHECK(fa[1].height == 8);
  CHECK(fa[2].height == 4);
  FeatureExtractorConfig other;
  other.seed = 99;
  CHECK(FeatureExtractor(3, other).features(f)[0].data != fa[0].data);
}

TEST_CASE("frame loss") {
  Rng rng(2);
  const FeatureExtractor ext(3);
  const Frame gt = oracle::random_frame(rng, 8, 8, 3);
  CHECK(frame_loss(pyramid_of(gt), gt, ext, 0.5).value == 0.0);

  Frame o(1, 1, 1), g(1, 1, 1);
  o.data[0] = 0.7;
  g.data[0] = 0.4;
  const FeatureExtractor ext1(1);
  CHECK(frame_loss(ScaledOutputs{{o}}, g, ext1, 0.0).value == doctest::Approx(0.3));

  const ScaledOutputs out = perturbed(pyramid_of(gt), rng, 0.2);
  const FrameLossResult r0 = frame_loss(out, gt, ext, 0.0);
  const FrameLossResult r1 = frame_loss(out, gt, ext, 0.5);
  const FrameLossResult r2 = frame_loss(out, gt, ext, 1.0);
  CHECK(r0.value == doctest::Approx(r0.l1));
  CHECK(r1.value == doctest::Approx(r1.l1 + 0.5 * r1.perceptual));
  CHECK(r2.value - r1.value == doctest::Approx(0.5 * r1.perceptual));
  CHECK(r1.perceptual > 0.0);
  REQUIRE(r1.grads.size() == 3);
}

TEST_CASE("frame loss gradients match finite differences on every level") {
  Rng rng(3);
  const FeatureExtractor ext(3);
  const Frame gt = oracle::random_frame(rng, 8, 8, 3);
  const ScaledOutputs out = perturbed(pyramid_of(gt), rng, 0.3);
  const FrameLossResult r = frame_loss(out, gt, ext, 0.5);
  for (std::size_t level = 0; level < 3; ++level) {
    const auto f = [&](const std::vector<double>& x) {
      ScaledOutputs p = out;
      p.levels[level].data = x;
      return frame_loss(p, gt, ext, 0.5).value;
    };
    const auto s = oracle::finite_difference_check(f, out.levels[level].data, r.grads[level].data,
                                                   oracle::all_coords(out.levels[level].size()));
    CHECK(s.max_rel_error < 1e-4);
    CHECK(s.checked > static_cast<int>(out.levels[level].size()) / 2);
  }
}

TEST_CASE("temporal loss kinds parse and print") {
  for (auto k : {TemporalLossKind::kNone, TemporalLossKind::kFlow, TemporalLossKind::kRelationBasic,
                 TemporalLossKind::kRelationMultiscale}) {
    CHECK(parse_temporal_loss_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_temporal_loss_kind("optical"), Error);
}

TEST_CASE("training objective combines the terms") {
  Rng rng(4);
  const FeatureExtractor ext(3);
  const Frame g0 = oracle::random_frame(rng, 8, 8, 3), g1 = oracle::random_frame(rng, 8, 8, 3);
  const ScaledOutputs o0 = perturbed(pyramid_of(g0), rng, 0.1);
  const ScaledOutputs o1 = perturbed(pyramid_of(g1), rng, 0.1);

  ObjectiveConfig cfg;
  CHECK(cfg.lambda_perceptual == 0.5);
  CHECK(cfg.lambda_temporal == 50.0);
  CHECK(cfg.scales.sizes() == std::vector<int>{1, 3, 5, 7});

  const double a = frame_loss(o0, g0, ext, 0.5).value;
  const double b = frame_loss(o1, g1, ext, 0.5).value;
  const double c = multi_scale_relation_loss(o0.full(), o1.full(), g0, g1).value;
  const ObjectiveResult r = training_objective(o0, o1, g0, g1, cfg, ext);
  CHECK(r.value == doctest::Approx(a + b + 50.0 * c).epsilon(1e-13));
  CHECK(r.temporal == doctest::Approx(c));

  cfg.lambda_temporal = 0.0;
  CHECK(training_objective(o0, o1, g0, g1, cfg, ext).value == doctest::Approx(a + b).epsilon(1e-13));

  cfg.lambda_temporal = 50.0;
  const ScaledOutputs p0 = pyramid_of(g0), p1 = pyramid_of(g1);
  CHECK(training_objective(p0, p1, g0, g1, cfg, ext).value == 0.0);

  cfg.temporal_loss_kind = TemporalLossKind::kFlow;
  CHECK_THROWS_AS(training_objective(o0, o1, g0, g1, cfg, ext), Error);
  const FlowInputs flow{FlowField(8, 8), OcclusionMask(8, 8)};
  const ObjectiveResult rf = training_objective(o0, o1, g0, g1, cfg, ext, &flow);
  CHECK(rf.temporal == doctest::Approx(flow_consistency_loss(o0.full(), o1.full(), flow.flow, flow.mask).value));

  cfg.temporal_loss_kind = TemporalLossKind::kNone;
  CHECK(training_objective(o0, o1, g0, g1, cfg, ext).temporal == 0.0);
}

TEST_CASE("training objective gradients match finite differences") {
  Rng rng(5);
  const FeatureExtractor ext(3);
  const Frame g0 = oracle::random_frame(rng, 8, 8, 3), g1 = oracle::random_frame(rng, 8, 8, 3);
  const ScaledOutputs o0 = perturbed(pyramid_of(g0), rng, 0.2);
  const ScaledOutputs o1 = perturbed(pyramid_of(g1), rng, 0.2);
  for (auto kind : {TemporalLossKind::kRelationBasic, TemporalLossKind::kRelationMultiscale}) {
    ObjectiveConfig cfg;
    cfg.temporal_loss_kind = kind;
    const ObjectiveResult r = training_objective(o0, o1, g0, g1, cfg, ext);
    const auto f = [&](const std::vector<double>& x) {
      ScaledOutputs p = o1;
      p.levels[0].data = x;
      return training_objective(o0, p, g0, g1, cfg, ext).value;
    };
    const auto s = oracle::finite_difference_check(f, o1.levels[0].data, r.grad_t1[0].data,
                                                   oracle::all_coords(o1.levels[0].size()));
    CHECK(s.max_rel_error < 1e-4);
    CHECK(s.checked > 100);
  }
}
