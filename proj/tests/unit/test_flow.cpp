#include <cmath>

#include "doctest.h"
#include "../oracles.hpp"
#include "../test_util.hpp"
#include "vdm/flow.hpp"

using namespace vdm;

namespace {

FlowField random_flow(Rng& rng, int h, int w, double range) {
  FlowField f(h, w);
  for (double& v : f.vectors) v = rng.uniform(-range, range);
  return f;
}

double dot(const Frame& a, const Frame& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("warp") {
  Rng rng(4);
  const Frame src = oracle::random_frame(rng, 5, 6, 3);
  CHECK(warp(src, FlowField(5, 6)).data == src.data);

  Frame ramp(3, 5, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) ramp.at(y, x, 0) = x / 4.0;
  const Frame shifted = warp(ramp, FlowField(3, 5, 1.0, 0.0));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) CHECK(shifted.at(y, x, 0) == ramp.at(y, std::min(x + 1, 4), 0));

  for (double v : warp(Frame(4, 4, 2, 0.7), random_flow(rng, 4, 4, 3.0)).data) CHECK(v == doctest::Approx(0.7));
  CHECK_THROWS_AS(warp(src, FlowField(4, 6)), Error);
}

TEST_CASE("warp adjoint is the exact transpose") {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Frame x = oracle::random_frame(rng, 7, 9, 3, -1, 1);
    const Frame y = oracle::random_frame(rng, 7, 9, 3, -1, 1);
    const FlowField f = random_flow(rng, 7, 9, 4.0);
    CHECK(std::abs(dot(warp(x, f), y) - dot(x, warp_adjoint(y, f))) < 1e-10);
  }
}

TEST_CASE("occlusion mask") {
  const OcclusionMask zero = occlusion_mask(FlowField(4, 12), FlowField(4, 12));
  CHECK(zero.count() == 48);
  CHECK(occlusion_mask(FlowField(4, 12, 5, 0), FlowField(4, 12, -5, 0)).count() == 48);
  CHECK(occlusion_mask(FlowField(4, 12, 5, 0), FlowField(4, 12, 0, 0), 0.01, 0.5).count() == 0);
  CHECK_THROWS_AS(occlusion_mask(FlowField(4, 12), FlowField(4, 11)), Error);
}

TEST_CASE("flow consistency loss") {
  Rng rng(9);
  const Frame a = oracle::random_frame(rng, 4, 5, 3);
  CHECK(flow_consistency_loss(a, a, FlowField(4, 5), OcclusionMask(4, 5)).value == 0.0);

  const Frame b = oracle::random_frame(rng, 4, 5, 3);
  const LossReport hidden = flow_consistency_loss(a, b, random_flow(rng, 4, 5, 2), OcclusionMask(4, 5, 0));
  CHECK(hidden.value == 0.0);
  for (double g : hidden.grad_out_t1.data) CHECK(g == 0.0);

  Frame o0(1, 2, 1), o1(1, 2, 1);
  o0.data = {0.1, 0.4};
  o1.data = {0.2, 0.8};
  CHECK(flow_consistency_loss(o0, o1, FlowField(1, 2), OcclusionMask(1, 2)).value == doctest::Approx(0.25));

  SUBCASE("gradients match finite differences") {
    Frame x0, x1;
    FlowField f;
    OcclusionMask m(6, 6);
    for (std::size_t i = 0; i < m.visible.size(); i += 5) m.visible[i] = 0;
    for (;;) {
      x0 = oracle::random_frame(rng, 6, 6, 3);
      x1 = oracle::random_frame(rng, 6, 6, 3);
      f = random_flow(rng, 6, 6, 1.5);
      const Frame w = warp(x1, f);
      double smallest = 1e300;
      for (std::size_t i = 0; i < w.size(); ++i) smallest = std::min(smallest, std::abs(w.data[i] - x0.data[i]));
      if (smallest > 1e-3) break;
    }
    const LossReport r = flow_consistency_loss(x0, x1, f, m);
    const auto by_t = [&](const std::vector<double>& v) {
      Frame p = x0;
      p.data = v;
      return flow_consistency_loss(p, x1, f, m).value;
    };
    const auto by_t1 = [&](const std::vector<double>& v) {
      Frame p = x1;
      p.data = v;
      return flow_consistency_loss(x0, p, f, m).value;
    };
    const auto s0 = oracle::finite_difference_check(by_t, x0.data, r.grad_out_t.data, oracle::all_coords(x0.size()));
    const auto s1 = oracle::finite_difference_check(by_t1, x1.data, r.grad_out_t1.data, oracle::all_coords(x1.size()));
    CHECK(s0.max_rel_error < 1e-6);
    CHECK(s1.max_rel_error < 1e-6);
    CHECK(s0.skipped == 0);
    CHECK(s1.skipped == 0);
  }
}

TEST_CASE("block matching") {
  Rng rng(10);
  const Frame tex = oracle::random_frame(rng, 24, 24, 3);
  const FlowField same = block_matching_flow(tex, tex);
  for (double v : same.vectors) CHECK(v == 0.0);

  for (double v : block_matching_flow(Frame(16, 16, 1, 0.5), Frame(16, 16, 1, 0.5), 5, 3).vectors) CHECK(v == 0.0);

  // source(x) = target(x - 2): pixel x of the target lives at x + 2 in the source.
  Frame shifted(24, 24, 3);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 3; ++c) shifted.at(y, x, c) = tex.at(y, std::max(x - 2, 0), c);
  const FlowField f = block_matching_flow(tex, shifted, 7, 3);
  for (int y = 7; y < 17; ++y)
    for (int x = 7; x < 17; ++x) {
      CHECK(f.dx(y, x) == 2.0);
      CHECK(f.dy(y, x) == 0.0);
    }
  CHECK_THROWS_AS(block_matching_flow(tex, tex, 0, 2), Error);
}

TEST_CASE(".flo files round-trip bitwise") {
  testutil::TempDir dir;
  Rng rng(12);
  FlowField f = random_flow(rng, 5, 7, 10.0);
  for (double& v : f.vectors) v = static_cast<float>(v);
  write_flo(f, dir / "a.flo");
  const FlowField g = read_flo(dir / "a.flo");
  CHECK(g.height == 5);
  CHECK(g.width == 7);
  CHECK(g.vectors == f.vectors);
  write_flo(g, dir / "b.flo");
  CHECK(testutil::read_bytes(dir / "a.flo") == testutil::read_bytes(dir / "b.flo"));
  CHECK(std::filesystem::file_size(dir / "a.flo") == 12 + 5 * 7 * 8);

  testutil::write_bytes(dir / "bad.flo", "XXXX00000000");
  CHECK_THROWS_AS(read_flo(dir / "bad.flo"), Error);
  const std::string bytes = testutil::read_bytes(dir / "a.flo");
  testutil::write_bytes(dir / "short.flo", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_flo(dir / "short.flo"), Error);
  CHECK_THROWS_AS(read_flo(dir / "none.flo"), Error);
}
