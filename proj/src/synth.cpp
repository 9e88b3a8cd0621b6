#include "vdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vdm/rng.hpp"

namespace vdm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream identifiers keep the different random quantities independent.
enum Stream : std::uint64_t {
  kTextureStream = 11,
  kShapeStream = 12,
  kFlickerStream = 21,
  kJitterStream = 22,
  kPhaseStream = 23,
};

struct Wave {
  double u, v, phase;
  double amp[3];
};

struct Shape {
  bool disk;
  double cx, cy, rx, ry;
  double color[3];
};

struct Scene {
  std::vector<Wave> waves;
  std::vector<Shape> shapes;
};

Scene build_scene(const SynthConfig& cfg) {
  Rng rng(cfg.seed, kTextureStream);
  Scene scene;
  for (int i = 0; i < 6; ++i) {
    Wave w{};
    const double freq = rng.uniform(0.015, 0.09);
    const double angle = rng.uniform(0.0, kTwoPi);
    w.u = freq * std::cos(angle);
    w.v = freq * std::sin(angle);
    w.phase = rng.uniform(0.0, kTwoPi);
    for (double& a : w.amp) a = rng.uniform(0.02, 0.06);
    scene.waves.push_back(w);
  }
  Rng srng(cfg.seed, kShapeStream);
  const double extent = std::max(cfg.width, cfg.height);
  for (int i = 0; i < 7; ++i) {
    Shape s{};
    s.disk = srng.uniform() < 0.4;
    s.cx = srng.uniform(-0.1, 1.1) * cfg.width;
    s.cy = srng.uniform(-0.1, 1.1) * cfg.height;
    s.rx = srng.uniform(0.06, 0.2) * extent;
    s.ry = srng.uniform(0.06, 0.2) * extent;
    for (double& c : s.color) c = srng.uniform(-0.22, 0.22);
    scene.shapes.push_back(s);
  }
  return scene;
}

// Edge profile about 1 px wide so sub-pixel motion stays smooth while corners stay sharp.
double coverage(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

double shape_coverage(const Shape& s, double x, double y) {
  if (s.disk) {
    const double dx = (x - s.cx) / s.rx;
    const double dy = (y - s.cy) / s.ry;
    const double r = std::sqrt(dx * dx + dy * dy);
    return coverage((r - 1.0) * std::min(s.rx, s.ry));
  }
  const double d = std::max(std::abs(x - s.cx) - s.rx, std::abs(y - s.cy) - s.ry);
  return coverage(d);
}

double scene_value(const Scene& scene, double x, double y, int c) {
  double v = 0.45;
  for (const Wave& w : scene.waves) v += w.amp[c] * std::cos(kTwoPi * (w.u * x + w.v * y) + w.phase);
  for (const Shape& s : scene.shapes) {
    const double cov = shape_coverage(s, x, y);
    if (cov > 0.0) v += cov * s.color[c];
  }
  return v;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.frames < 1) throw Error(ErrorCode::kInvalidArgument, "synth: frame count must be >= 1");
  if (cfg.height < 1 || cfg.width < 1) throw Error(ErrorCode::kInvalidArgument, "synth: size must be positive");
  if (cfg.channels != 1 && cfg.channels != 3) throw Error(ErrorCode::kInvalidArgument, "synth: channels must be 1 or 3");
  if (cfg.moire_amplitude < 0.0 || cfg.moire_amplitude > 1.0 || cfg.flicker_amplitude < 0.0 ||
      cfg.flicker_amplitude > 1.0 || cfg.moire_jitter < 0.0 || cfg.moire_jitter > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "synth: amplitudes must lie in [0,1]");
  }
  if (cfg.brightness_ramp <= -1.0) throw Error(ErrorCode::kInvalidArgument, "synth: ramp must exceed -1");
}

Frame render_clean_frame(const SynthConfig& cfg, int index) {
  validate(cfg);
  const Scene scene = build_scene(cfg);
  const double gain = std::pow(1.0 + cfg.brightness_ramp, index);
  const double ox = cfg.motion_x * index;
  const double oy = cfg.motion_y * index;
  Frame f(cfg.height, cfg.width, cfg.channels);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x)
      for (int c = 0; c < cfg.channels; ++c) f.at(y, x, c) = gain * scene_value(scene, x + ox, y + oy, c);
  return f;
}

VideoClip generate_clean(const SynthConfig& cfg) {
  validate(cfg);
  VideoClip clip;
  clip.frames.reserve(cfg.frames);
  for (int k = 0; k < cfg.frames; ++k) clip.frames.push_back(clamp01(render_clean_frame(cfg, k)));
  return clip;
}

double flicker_gain(const SynthConfig& cfg, int index) {
  return cfg.flicker_amplitude * (2.0 * counter_uniform(cfg.seed, kFlickerStream, index) - 1.0);
}

Frame moire_pattern(const SynthConfig& cfg, int index, int height, int width, int channels) {
  Frame m(height, width, channels);
  if (cfg.moire_amplitude == 0.0 || cfg.moire_frequencies.empty()) return m;
  const double amp =
      cfg.moire_amplitude * (1.0 + cfg.moire_jitter * (2.0 * counter_uniform(cfg.seed, kJitterStream, index) - 1.0));
  std::vector<double> phase(cfg.moire_frequencies.size());
  for (std::size_t j = 0; j < phase.size(); ++j) {
    phase[j] = kTwoPi * counter_uniform(cfg.seed, kPhaseStream, j) + cfg.moire_drift * index;
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        double v = amp;
        for (std::size_t j = 0; j < phase.size(); ++j) {
          const Grating& g = cfg.moire_frequencies[j];
          v *= std::cos(kTwoPi * (g.fx * x + g.fy * y) + phase[j] + c * cfg.moire_channel_phase);
        }
        m.at(y, x, c) = v;
      }
    }
  }
  return m;
}

VideoClip degrade(const VideoClip& clean, const SynthConfig& cfg) {
  validate_clip(clean);
  VideoClip out;
  out.frame_rate = clean.frame_rate;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    const Frame& f = clean[k];
    const double gain = 1.0 + flicker_gain(cfg, static_cast<int>(k));
    const Frame m = moire_pattern(cfg, static_cast<int>(k), f.height, f.width, f.channels);
    Frame d(f.height, f.width, f.channels);
    for (std::size_t i = 0; i < f.size(); ++i) d.data[i] = std::clamp(f.data[i] * gain + m.data[i], 0.0, 1.0);
    out.frames.push_back(std::move(d));
  }
  return out;
}

}  // namespace vdm
