#include "vdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace vdm {
namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
  std::vector<double> g(kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    g[i] = std::exp(-((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode filtering of one channel; result is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += g[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

void require_pairs(const VideoClip& clip, std::size_t flows, std::size_t masks) {
  if (clip.size() < 1 || flows + 1 != clip.size() || masks + 1 != clip.size()) {
    throw Error(ErrorCode::kShapeMismatch, "warping error needs frame count - 1 flows and masks");
  }
}

}  // namespace

MetricReport MetricReport::from_values(std::string metric, std::vector<double> values) {
  MetricReport r;
  r.metric = std::move(metric);
  r.per_frame = std::move(values);
  double sum = 0.0;
  for (double v : r.per_frame) sum += v;
  r.mean = r.per_frame.empty() ? 0.0 : sum / static_cast<double>(r.per_frame.size());
  return r;
}

double psnr(const Frame& pred, const Frame& gt) {
  require_same_shape(pred, gt, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    sum += d * d;
  }
  const double mse = pred.size() ? sum / static_cast<double>(pred.size()) : 0.0;
  if (mse <= 0.0) return kPsnrCap;
  return std::clamp(10.0 * std::log10(1.0 / mse), 0.0, kPsnrCap);
}

double ssim(const Frame& pred, const Frame& gt) {
  require_same_shape(pred, gt, "ssim");
  if (pred.height < kSsimWindow || pred.width < kSsimWindow) {
    throw Error(ErrorCode::kInvalidArgument, "ssim needs frames of at least 11x11");
  }
  static const std::vector<double> g = gaussian_kernel();
  const int h = pred.height;
  const int w = pred.width;
  const std::size_t n = pred.pixel_count();
  double total = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t p = 0; p < n; ++p) {
      a[p] = pred.data[p * pred.channels + c];
      b[p] = gt.data[p * gt.channels + c];
      aa[p] = a[p] * a[p];
      bb[p] = b[p] * b[p];
      ab[p] = a[p] * b[p];
    }
    const auto mu_a = filter_valid(a, h, w, g);
    const auto mu_b = filter_valid(b, h, w, g);
    const auto s_aa = filter_valid(aa, h, w, g);
    const auto s_bb = filter_valid(bb, h, w, g);
    const auto s_ab = filter_valid(ab, h, w, g);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = s_aa[i] - mu_a[i] * mu_a[i];
      const double vb = s_bb[i] - mu_b[i] * mu_b[i];
      const double cov = s_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / pred.channels;
}

double masked_warp_residual(const Frame& out_t, const Frame& out_t1, const FlowField& flow,
                            const OcclusionMask& mask) {
  require_same_shape(out_t, out_t1, "warping residual frames");
  if (mask.height != out_t.height || mask.width != out_t.width) {
    throw Error(ErrorCode::kShapeMismatch, "warping residual: mask size differs from frames");
  }
  const Frame warped = warp(out_t1, flow);
  const int ch = out_t.channels;
  double sum = 0.0;
  for (std::size_t p = 0; p < out_t.pixel_count(); ++p) {
    if (!mask.visible[p]) continue;
    for (int c = 0; c < ch; ++c) sum += std::abs(warped.data[p * ch + c] - out_t.data[p * ch + c]);
  }
  return sum / std::max(1.0, static_cast<double>(mask.count()) * ch);
}

std::vector<double> warping_error_pairs(const VideoClip& clip, const std::vector<FlowField>& flows,
                                        const std::vector<OcclusionMask>& masks) {
  require_pairs(clip, flows.size(), masks.size());
  std::vector<double> out;
  out.reserve(flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    out.push_back(1000.0 * masked_warp_residual(clip[i], clip[i + 1], flows[i], masks[i]));
  }
  return out;
}

double warping_error(const VideoClip& clip, const std::vector<FlowField>& flows,
                     const std::vector<OcclusionMask>& masks) {
  return MetricReport::from_values("warping_error", warping_error_pairs(clip, flows, masks)).mean;
}

ClipFlows estimate_clip_flows(const VideoClip& reference, const BlockMatchParams& bm, const OcclusionParams& occ) {
  validate_clip(reference);
  ClipFlows out;
  for (std::size_t i = 0; i + 1 < reference.size(); ++i) {
    FlowField to_prev = block_matching_flow(reference[i], reference[i + 1], bm);
    const FlowField to_next = block_matching_flow(reference[i + 1], reference[i], bm);
    out.masks.push_back(occlusion_mask(to_prev, to_next, occ));
    out.flows.push_back(std::move(to_prev));
  }
  return out;
}

MetricReport psnr_report(const VideoClip& pred, const VideoClip& gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "clips differ in length");
  std::vector<double> v;
  for (std::size_t i = 0; i < pred.size(); ++i) v.push_back(psnr(pred[i], gt[i]));
  return MetricReport::from_values("psnr", std::move(v));
}

MetricReport ssim_report(const VideoClip& pred, const VideoClip& gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "clips differ in length");
  std::vector<double> v;
  for (std::size_t i = 0; i < pred.size(); ++i) v.push_back(ssim(pred[i], gt[i]));
  return MetricReport::from_values("ssim", std::move(v));
}

MetricReport warping_report(const VideoClip& pred, const ClipFlows& flows) {
  return MetricReport::from_values("warping_error", warping_error_pairs(pred, flows.flows, flows.masks));
}

void write_frame_metrics_csv(const MetricReport& psnr_r, const MetricReport& ssim_r,
                             const std::filesystem::path& path) {
  if (psnr_r.frame_count() != ssim_r.frame_count()) {
    throw Error(ErrorCode::kShapeMismatch, "psnr and ssim reports differ in frame count");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "index,psnr,ssim\n";
  for (std::size_t i = 0; i < psnr_r.frame_count(); ++i) {
    out << i << ',' << psnr_r.per_frame[i] << ',' << ssim_r.per_frame[i] << '\n';
  }
  out << "mean," << psnr_r.mean << ',' << ssim_r.mean << '\n';
}

void write_warping_csv(const MetricReport& warping, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "pair,warping_error\n";
  for (std::size_t i = 0; i < warping.frame_count(); ++i) out << i << ',' << warping.per_frame[i] << '\n';
  out << "mean," << warping.mean << '\n';
}

}  // namespace vdm
