#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vdm/flow.hpp"
#include "vdm/tensor.hpp"

namespace vdm {

struct MetricReport {
  std::string metric;
  std::vector<double> per_frame;
  double mean = 0.0;

  std::size_t frame_count() const { return per_frame.size(); }
  static MetricReport from_values(std::string metric, std::vector<double> values);
};

inline constexpr double kPsnrCap = 100.0;

/// Peak 1.0; identical frames (or anything above the cap) report kPsnrCap.
double psnr(const Frame& pred, const Frame& gt);

/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, valid windows only,
/// averaged over channels. Needs both dimensions >= 11.
double ssim(const Frame& pred, const Frame& gt);

/// Mean masked L1 flow residual over consecutive pairs, scaled by 1000.
/// flows[i] and masks[i] relate frame i+1 to frame i.
double warping_error(const VideoClip& clip, const std::vector<FlowField>& flows,
                     const std::vector<OcclusionMask>& masks);

/// Per-pair values (already scaled by 1000) behind warping_error.
std::vector<double> warping_error_pairs(const VideoClip& clip, const std::vector<FlowField>& flows,
                                        const std::vector<OcclusionMask>& masks);

/// Value of the masked warp residual without building gradients.
double masked_warp_residual(const Frame& out_t, const Frame& out_t1, const FlowField& flow,
                            const OcclusionMask& mask);

struct ClipFlows {
  std::vector<FlowField> flows;  // i+1 -> i
  std::vector<OcclusionMask> masks;
};

/// Block-matched flows between consecutive frames of `reference`, with forward-backward masks.
ClipFlows estimate_clip_flows(const VideoClip& reference, const BlockMatchParams& bm = {},
                              const OcclusionParams& occ = {});

MetricReport psnr_report(const VideoClip& pred, const VideoClip& gt);
MetricReport ssim_report(const VideoClip& pred, const VideoClip& gt);
MetricReport warping_report(const VideoClip& pred, const ClipFlows& flows);

/// "index,psnr,ssim" rows followed by a "mean" footer row.
void write_frame_metrics_csv(const MetricReport& psnr, const MetricReport& ssim,
                             const std::filesystem::path& path);
/// "pair,warping_error" rows followed by a "mean" footer row.
void write_warping_csv(const MetricReport& warping, const std::filesystem::path& path);

}  // namespace vdm
