#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "vdm/error.hpp"

namespace vdm {

/// Interleaved row-major image: value(y, x, c) lives at (y * width + x) * channels + c.
/// Images on disk are in [0,1]; gradient tensors reuse the type and may hold any finite value.
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Frame() = default;
  Frame(int h, int w, int c, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }

  bool same_shape(const Frame& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  double mean() const;
};

/// d(loss)/d(pixel), shaped like the frame it differentiates.
using GradientTensor = Frame;

struct VideoClip {
  std::vector<Frame> frames;
  double frame_rate = 30.0;

  std::size_t size() const { return frames.size(); }
  const Frame& operator[](std::size_t i) const { return frames[i]; }
  Frame& operator[](std::size_t i) { return frames[i]; }
};

// Throws kShapeMismatch with `what` in the message.
void require_same_shape(const Frame& a, const Frame& b, const char* what);

// Throws if the clip is empty or frames disagree in shape.
void validate_clip(const VideoClip& clip);

/// Bilinear interpolation; coordinates are clamped to [0, W-1] x [0, H-1] first.
std::vector<double> bilinear_sample(const Frame& frame, double x, double y);

/// The four (flat pixel index, weight) pairs behind one bilinear sample. Clamped taps may
/// repeat an index; the adjoint of sampling scatters along the same taps.
struct BilinearTaps {
  std::array<std::size_t, 4> pixel{};
  std::array<double, 4> weight{};
};
BilinearTaps bilinear_taps(int height, int width, double x, double y);

/// 2x2 mean pooling; output dims are ceil(dim / 2), edge blocks average what exists.
Frame downsample_half(const Frame& frame);

Frame clamp01(Frame frame);
Frame to_grayscale(const Frame& frame);

}  // namespace vdm
