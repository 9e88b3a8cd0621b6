#include <cmath>
#include <numbers>

#include "doctest.h"
#include "vdm/synth.hpp"

using namespace vdm;

namespace {

SynthConfig small() {
  SynthConfig cfg;
  cfg.frames = 5;
  cfg.height = 16;
  cfg.width = 20;
  return cfg;
}

}  // namespace

TEST_CASE("clean clips") {
  SynthConfig cfg = small();
  const VideoClip a = generate_clean(cfg);
  const VideoClip b = generate_clean(cfg);
  REQUIRE(a.size() == 5);
  CHECK(a[0].height == 16);
  CHECK(a[0].width == 20);
  CHECK(a[0].channels == 3);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].data == b[k].data);
  for (const Frame& f : a.frames)
    for (double v : f.data) CHECK((v >= 0.0 && v <= 1.0));

  cfg.seed = 2;
  CHECK(generate_clean(cfg)[0].data != a[0].data);

  SUBCASE("static scene without ramp repeats the first frame") {
    SynthConfig s = small();
    s.motion_x = s.motion_y = 0.0;
    s.brightness_ramp = 0.0;
    const VideoClip still = generate_clean(s);
    for (const Frame& f : still.frames) CHECK(f.data == still[0].data);
  }
  SUBCASE("brightness ramp multiplies the unclamped mean") {
    SynthConfig s = small();
    s.motion_x = s.motion_y = 0.0;
    s.brightness_ramp = 0.05;
    const double m0 = render_clean_frame(s, 0).mean();
    for (int k = 1; k < 5; ++k) CHECK(render_clean_frame(s, k).mean() == doctest::Approx(m0 * std::pow(1.05, k)).epsilon(1e-12));
  }
}

TEST_CASE("degradation") {
  SynthConfig cfg = small();
  const VideoClip clean = generate_clean(cfg);
  const VideoClip d1 = degrade(clean, cfg);
  const VideoClip d2 = degrade(clean, cfg);
  for (std::size_t k = 0; k < d1.size(); ++k) CHECK(d1[k].data == d2[k].data);
  CHECK(d1[0].data != clean[0].data);

  SUBCASE("zero amplitudes leave the clip untouched") {
    SynthConfig z = cfg;
    z.moire_amplitude = 0.0;
    z.flicker_amplitude = 0.0;
    const VideoClip same = degrade(clean, z);
    for (std::size_t k = 0; k < clean.size(); ++k) CHECK(same[k].data == clean[k].data);
  }
  SUBCASE("single grating on mid-gray follows the closed form") {
    SynthConfig g = cfg;
    g.moire_frequencies = {{0.1, 0.05}};
    g.moire_amplitude = 0.3;
    g.moire_jitter = 0.0;
    g.flicker_amplitude = 0.0;
    g.channels = 1;
    VideoClip gray;
    gray.frames.assign(3, Frame(16, 20, 1, 0.5));
    const VideoClip out = degrade(gray, g);
    // Phase at the origin, recovered from frame 0.
    const double phi = std::acos((out[0].at(0, 0, 0) - 0.5) / 0.3);
    const double phi_alt = -phi;
    const Frame& f0 = out[0];
    const auto expected = [&](double p, int y, int x, int k) {
      return std::clamp(0.5 + 0.3 * std::cos(2 * std::numbers::pi * (0.1 * x + 0.05 * y) + p + g.moire_drift * k), 0.0, 1.0);
    };
    const double p = std::abs(f0.at(0, 1, 0) - expected(phi, 0, 1, 0)) < 1e-9 ? phi : phi_alt;
    for (int k = 0; k < 3; ++k)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) CHECK(out[k].at(y, x, 0) == doctest::Approx(expected(p, y, x, k)).epsilon(1e-9));
  }
  SUBCASE("flicker and jitter are per-frame and bounded") {
    for (int k = 0; k < 10; ++k) CHECK(std::abs(flicker_gain(cfg, k)) <= cfg.flicker_amplitude);
    CHECK(flicker_gain(cfg, 0) != flicker_gain(cfg, 1));
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg = small();
  cfg.frames = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = small();
  cfg.channels = 2;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = small();
  cfg.moire_amplitude = -0.1;
  CHECK_THROWS_AS(validate(cfg), Error);
  CHECK_THROWS_AS(generate_clean(cfg), Error);
}
