#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vdm/rng.hpp"
#include "vdm/tensor.hpp"

namespace vdm::nn {

/// Planar (channel, row, column) activation tensor used inside networks.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

Tensor to_tensor(const Frame& frame);
Frame to_frame(const Tensor& tensor);

/// Square convolution with zero padding k/2. Weight layout [out][in][ky][kx].
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  std::vector<double> weight;
  std::vector<double> bias;

  Conv2d() = default;
  Conv2d(int in, int out, int k, int s = 1);

  int out_size(int n) const { return (n + 2 * (kernel / 2) - kernel) / stride + 1; }
  void init_he(Rng& rng, double gain = 1.0);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

Tensor conv2d(const Tensor& in, const Conv2d& conv);

/// Accumulates parameter gradients into `grad` when non-null (frozen layers pass null).
/// Returns d/d(input) unless want_input_grad is false, in which case the result is empty.
Tensor conv2d_backward(const Tensor& in, const Conv2d& conv, const Tensor& grad_out, Conv2d* grad,
                       bool want_input_grad = true);

Tensor relu(Tensor t);
/// Gradient through max(0, .) given the forward output.
Tensor relu_backward(const Tensor& output, Tensor grad);

/// 2x2 mean pooling on planar tensors (ceil dims); adjoint spreads each value back.
Tensor mean_pool2(const Tensor& t);
Tensor mean_pool2_adjoint(const Tensor& grad, int height, int width);

/// Lossless factor-2 rearrangement: (C, H, W) -> (4C, H/2, W/2). H and W must be even.
Tensor space_to_depth(const Tensor& t);
Tensor depth_to_space(const Tensor& t);

}  // namespace vdm::nn
