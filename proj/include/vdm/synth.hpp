#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vdm/tensor.hpp"

namespace vdm {

struct Grating {
  double fx = 0.0;  // cycles / pixel
  double fy = 0.0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int frames = 12;
  int height = 64;
  int width = 64;
  int channels = 3;
  double motion_x = 1.0;  // texture translation, pixels / frame
  double motion_y = 0.5;
  std::vector<Grating> moire_frequencies{{0.21, 0.05}, {0.19, 0.07}};
  double moire_amplitude = 0.25;
  double moire_jitter = 0.3;          // relative per-frame amplitude variation
  double moire_drift = 0.6;           // radians / frame
  double moire_channel_phase = 1.2;   // radians between colour channels
  double flicker_amplitude = 0.08;
  double brightness_ramp = 0.02;      // global gain delta / frame
};

/// Throws kInvalidArgument for non-positive sizes, channels other than 1 or 3, or negative amplitudes.
void validate(const SynthConfig& cfg);

/// Frame `index` of the clean clip before clamping: scene(x + mx*k, y + my*k) * (1 + ramp)^k.
Frame render_clean_frame(const SynthConfig& cfg, int index);

/// Clamped clean clip; same seed gives identical bytes.
VideoClip generate_clean(const SynthConfig& cfg);

/// Moire pattern added to frame `index`: amplitude_k * prod_j cos(2 pi (fx_j x + fy_j y) + phase_jk).
Frame moire_pattern(const SynthConfig& cfg, int index, int height, int width, int channels);
double flicker_gain(const SynthConfig& cfg, int index);

/// degraded_k = clamp(clean_k * (1 + flicker_k) + moire_k)
VideoClip degrade(const VideoClip& clean, const SynthConfig& cfg);

}  // namespace vdm
