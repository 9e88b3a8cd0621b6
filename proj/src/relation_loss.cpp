#include "vdm/relation_loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdm {
namespace {

void require_valid_k(int k) {
  if (k < 1 || k % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "patch size must be odd and >= 1, got " + std::to_string(k));
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_four(const Frame& a, const Frame& b, const Frame& c, const Frame& d) {
  require_same_shape(a, b, "out_t vs out_t1");
  require_same_shape(a, c, "out_t vs gt_t");
  require_same_shape(a, d, "out_t vs gt_t1");
}

// 1-D box mean along x (axis 0) or y (axis 1) with clamped indices.
Frame box_pass(const Frame& in, int k, int axis) {
  const int r = k / 2;
  const double inv = 1.0 / k;
  Frame out(in.height, in.width, in.channels);
  const int len = axis == 0 ? in.width : in.height;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const int pos = axis == 0 ? x : y;
      for (int c = 0; c < in.channels; ++c) {
        double sum = 0.0;
        for (int d = -r; d <= r; ++d) {
          const int q = std::clamp(pos + d, 0, len - 1);
          sum += axis == 0 ? in.at(y, q, c) : in.at(q, x, c);
        }
        out.at(y, x, c) = sum * inv;
      }
    }
  }
  return out;
}

// Transpose of box_pass: each output value is scattered back to its clamped taps.
Frame box_pass_adjoint(const Frame& g, int k, int axis) {
  const int r = k / 2;
  const double inv = 1.0 / k;
  Frame out(g.height, g.width, g.channels);
  const int len = axis == 0 ? g.width : g.height;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int pos = axis == 0 ? x : y;
      for (int c = 0; c < g.channels; ++c) {
        const double v = g.at(y, x, c) * inv;
        if (v == 0.0) continue;
        for (int d = -r; d <= r; ++d) {
          const int q = std::clamp(pos + d, 0, len - 1);
          (axis == 0 ? out.at(y, q, c) : out.at(q, x, c)) += v;
        }
      }
    }
  }
  return out;
}

}  // namespace

ScaleSet::ScaleSet(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw Error(ErrorCode::kInvalidArgument, "scale set is empty");
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    require_valid_k(sizes_[i]);
    if (i > 0 && sizes_[i] <= sizes_[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "scale set must be strictly ascending");
    }
  }
}

bool ScaleSet::contains(int k) const {
  return std::find(sizes_.begin(), sizes_.end(), k) != sizes_.end();
}

Frame patch_stat(const Frame& frame, int k) {
  require_valid_k(k);
  if (k == 1) return frame;
  return box_pass(box_pass(frame, k, 0), k, 1);
}

Frame patch_stat_adjoint(const Frame& grad, int k) {
  require_valid_k(k);
  if (k == 1) return grad;
  return box_pass_adjoint(box_pass_adjoint(grad, k, 1), k, 0);
}

LossReport basic_relation_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t,
                               const Frame& gt_t1) {
  require_four(out_t, out_t1, gt_t, gt_t1);
  LossReport report;
  report.grad_out_t = Frame(out_t.height, out_t.width, out_t.channels);
  report.grad_out_t1 = Frame(out_t.height, out_t.width, out_t.channels);
  report.selected_scale.assign(out_t.size(), 1);
  const std::size_t n = out_t.size();
  if (n == 0) return report;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (out_t1.data[i] - out_t.data[i]) - (gt_t1.data[i] - gt_t.data[i]);
    sum += std::abs(r);
    const double g = sign(r) * inv_n;
    report.grad_out_t1.data[i] = g;
    report.grad_out_t.data[i] = -g;
  }
  report.value = sum * inv_n;
  return report;
}

LossReport multi_scale_relation_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t,
                                     const Frame& gt_t1, const ScaleSet& scales) {
  require_four(out_t, out_t1, gt_t, gt_t1);
  const auto& ks = scales.sizes();
  const std::size_t n = out_t.size();

  std::vector<Frame> pred_change;
  std::vector<Frame> gt_change;
  pred_change.reserve(ks.size());
  gt_change.reserve(ks.size());
  for (int k : ks) {
    Frame p1 = patch_stat(out_t1, k);
    const Frame p0 = patch_stat(out_t, k);
    Frame g1 = patch_stat(gt_t1, k);
    const Frame g0 = patch_stat(gt_t, k);
    for (std::size_t i = 0; i < n; ++i) {
      p1.data[i] -= p0.data[i];
      g1.data[i] -= g0.data[i];
    }
    pred_change.push_back(std::move(p1));
    gt_change.push_back(std::move(g1));
  }

  LossReport report;
  report.selected_scale.assign(n, ks.front());
  if (n == 0) {
    report.grad_out_t = Frame(out_t.height, out_t.width, out_t.channels);
    report.grad_out_t1 = report.grad_out_t;
    return report;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Frame> scale_grad(ks.size(), Frame(out_t.height, out_t.width, out_t.channels));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_mag = std::abs(pred_change[0].data[i]);
    for (std::size_t s = 1; s < ks.size(); ++s) {
      const double mag = std::abs(pred_change[s].data[i]);
      if (mag < best_mag) {
        best_mag = mag;
        best = s;
      }
    }
    report.selected_scale[i] = ks[best];
    const double r = pred_change[best].data[i] - gt_change[best].data[i];
    sum += std::abs(r);
    scale_grad[best].data[i] = sign(r) * inv_n;
  }
  report.value = sum * inv_n;

  report.grad_out_t1 = Frame(out_t.height, out_t.width, out_t.channels);
  for (std::size_t s = 0; s < ks.size(); ++s) {
    const Frame back = patch_stat_adjoint(scale_grad[s], ks[s]);
    for (std::size_t i = 0; i < n; ++i) report.grad_out_t1.data[i] += back.data[i];
  }
  report.grad_out_t = report.grad_out_t1;
  for (double& v : report.grad_out_t.data) v = -v;
  return report;
}

}  // namespace vdm
