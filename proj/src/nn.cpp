#include "vdm/nn.hpp"

#include <Eigen/Core>

#include <cmath>

namespace vdm::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Column matrix of shape (in * k * k) x (out_h * out_w).
std::vector<double> im2col(const Tensor& in, const Conv2d& conv, int oh, int ow) {
  const int k = conv.kernel;
  const int pad = k / 2;
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  std::vector<double> m(static_cast<std::size_t>(in.channels) * k * k * cols, 0.0);
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = m.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int y = 0; y < oh; ++y) {
          const int sy = y * conv.stride + ky - pad;
          if (sy < 0 || sy >= in.height) continue;
          const double* src = in.data.data() + c * in.plane() + static_cast<std::size_t>(sy) * in.width;
          double* dst = row + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int sx = x * conv.stride + kx - pad;
            if (sx >= 0 && sx < in.width) dst[x] = src[sx];
          }
        }
      }
    }
  }
  return m;
}

void col2im(const std::vector<double>& m, const Conv2d& conv, int oh, int ow, Tensor& out) {
  const int k = conv.kernel;
  const int pad = k / 2;
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < out.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = m.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int y = 0; y < oh; ++y) {
          const int sy = y * conv.stride + ky - pad;
          if (sy < 0 || sy >= out.height) continue;
          double* dst = out.data.data() + c * out.plane() + static_cast<std::size_t>(sy) * out.width;
          const double* src = row + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int sx = x * conv.stride + kx - pad;
            if (sx >= 0 && sx < out.width) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor to_tensor(const Frame& frame) {
  Tensor t(frame.channels, frame.height, frame.width);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < frame.channels; ++c) t.at(c, y, x) = frame.at(y, x, c);
  return t;
}

Frame to_frame(const Tensor& tensor) {
  Frame f(tensor.height, tensor.width, tensor.channels);
  for (int y = 0; y < tensor.height; ++y)
    for (int x = 0; x < tensor.width; ++x)
      for (int c = 0; c < tensor.channels; ++c) f.at(y, x, c) = tensor.at(c, y, x);
  return f;
}

Conv2d::Conv2d(int in, int out, int k, int s)
    : in_channels(in),
      out_channels(out),
      kernel(k),
      stride(s),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0),
      bias(static_cast<std::size_t>(out), 0.0) {
  if (in < 1 || out < 1 || k < 1 || k % 2 == 0 || s < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid convolution geometry");
  }
}

void Conv2d::init_he(Rng& rng, double gain) {
  const double scale = gain * std::sqrt(2.0 / (static_cast<double>(in_channels) * kernel * kernel));
  for (double& w : weight) w = scale * rng.normal();
  for (double& b : bias) b = 0.0;
}

Tensor conv2d(const Tensor& in, const Conv2d& conv) {
  if (in.channels != conv.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d: input has " + std::to_string(in.channels) +
                                               " channels, layer expects " + std::to_string(conv.in_channels));
  }
  const int oh = conv.out_size(in.height);
  const int ow = conv.out_size(in.width);
  const std::vector<double> cols = im2col(in, conv, oh, ow);
  const Eigen::Index patch = static_cast<Eigen::Index>(conv.in_channels) * conv.kernel * conv.kernel;
  const Eigen::Index npix = static_cast<Eigen::Index>(oh) * ow;

  Tensor out(conv.out_channels, oh, ow);
  MatMap y(out.data.data(), conv.out_channels, npix);
  ConstMatMap w(conv.weight.data(), conv.out_channels, patch);
  ConstMatMap x(cols.data(), patch, npix);
  y.noalias() = w * x;
  for (int o = 0; o < conv.out_channels; ++o) y.row(o).array() += conv.bias[o];
  return out;
}

Tensor conv2d_backward(const Tensor& in, const Conv2d& conv, const Tensor& grad_out, Conv2d* grad,
                       bool want_input_grad) {
  const int oh = conv.out_size(in.height);
  const int ow = conv.out_size(in.width);
  if (grad_out.channels != conv.out_channels || grad_out.height != oh || grad_out.width != ow) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d_backward: gradient shape does not match layer output");
  }
  const Eigen::Index patch = static_cast<Eigen::Index>(conv.in_channels) * conv.kernel * conv.kernel;
  const Eigen::Index npix = static_cast<Eigen::Index>(oh) * ow;
  ConstMatMap dy(grad_out.data.data(), conv.out_channels, npix);

  if (grad != nullptr) {
    const std::vector<double> cols = im2col(in, conv, oh, ow);
    ConstMatMap x(cols.data(), patch, npix);
    MatMap dw(grad->weight.data(), conv.out_channels, patch);
    dw.noalias() += dy * x.transpose();
    for (int o = 0; o < conv.out_channels; ++o) grad->bias[o] += dy.row(o).sum();
  }

  if (!want_input_grad) return {};
  std::vector<double> dcols(static_cast<std::size_t>(patch * npix));
  MatMap dx(dcols.data(), patch, npix);
  ConstMatMap w(conv.weight.data(), conv.out_channels, patch);
  dx.noalias() = w.transpose() * dy;
  Tensor grad_in(in.channels, in.height, in.width);
  col2im(dcols, conv, oh, ow, grad_in);
  return grad_in;
}

Tensor relu(Tensor t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
  return t;
}

Tensor relu_backward(const Tensor& output, Tensor grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(output.data[i] > 0.0)) grad.data[i] = 0.0;
  }
  return grad;
}

Tensor mean_pool2(const Tensor& t) {
  const int oh = (t.height + 1) / 2;
  const int ow = (t.width + 1) / 2;
  Tensor out(t.channels, oh, ow);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      const int ye = std::min(2 * y + 2, t.height);
      for (int x = 0; x < ow; ++x) {
        const int xe = std::min(2 * x + 2, t.width);
        double s = 0.0;
        for (int yy = 2 * y; yy < ye; ++yy)
          for (int xx = 2 * x; xx < xe; ++xx) s += t.at(c, yy, xx);
        out.at(c, y, x) = s / ((ye - 2 * y) * (xe - 2 * x));
      }
    }
  }
  return out;
}

Tensor mean_pool2_adjoint(const Tensor& grad, int height, int width) {
  Tensor out(grad.channels, height, width);
  for (int c = 0; c < grad.channels; ++c) {
    for (int y = 0; y < grad.height; ++y) {
      const int ye = std::min(2 * y + 2, height);
      for (int x = 0; x < grad.width; ++x) {
        const int xe = std::min(2 * x + 2, width);
        const double g = grad.at(c, y, x) / ((ye - 2 * y) * (xe - 2 * x));
        for (int yy = 2 * y; yy < ye; ++yy)
          for (int xx = 2 * x; xx < xe; ++xx) out.at(c, yy, xx) += g;
      }
    }
  }
  return out;
}

Tensor space_to_depth(const Tensor& t) {
  if (t.height % 2 != 0 || t.width % 2 != 0) {
    throw Error(ErrorCode::kShapeMismatch, "space_to_depth needs even height and width");
  }
  Tensor out(t.channels * 4, t.height / 2, t.width / 2);
  for (int c = 0; c < t.channels; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) out.at(c * 4 + (y % 2) * 2 + (x % 2), y / 2, x / 2) = t.at(c, y, x);
  return out;
}

Tensor depth_to_space(const Tensor& t) {
  if (t.channels % 4 != 0) throw Error(ErrorCode::kShapeMismatch, "depth_to_space needs channels % 4 == 0");
  Tensor out(t.channels / 4, t.height * 2, t.width * 2);
  for (int c = 0; c < out.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out.at(c, y, x) = t.at(c * 4 + (y % 2) * 2 + (x % 2), y / 2, x / 2);
  return out;
}

}  // namespace vdm::nn
