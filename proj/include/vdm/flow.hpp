#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vdm/relation_loss.hpp"
#include "vdm/tensor.hpp"

namespace vdm {

/// Pixel (x, y) of the target frame corresponds to (x + dx, y + dy) in the source frame.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> vectors;  // interleaved dx, dy; row-major

  FlowField() = default;
  FlowField(int h, int w, double dx = 0.0, double dy = 0.0);

  double& dx(int y, int x) { return vectors[2 * (static_cast<std::size_t>(y) * width + x)]; }
  double& dy(int y, int x) { return vectors[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  double dx(int y, int x) const { return vectors[2 * (static_cast<std::size_t>(y) * width + x)]; }
  double dy(int y, int x) const { return vectors[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
};

/// Binary visibility map; 1 = pixel takes part in the loss.
struct OcclusionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> visible;

  OcclusionMask() = default;
  OcclusionMask(int h, int w, std::uint8_t fill = 1)
      : height(h), width(w), visible(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t count() const;
};

struct OcclusionParams {
  double alpha = 0.01;
  double beta = 0.5;  // px^2
};

/// Backward warp: output(x, y) = bilinear_sample(source, x + dx, y + dy).
Frame warp(const Frame& source, const FlowField& flow);

/// Transpose of warp with respect to the source frame: scatters each output value onto
/// the bilinear taps it was sampled from.
Frame warp_adjoint(const Frame& grad, const FlowField& flow);

/// Forward-backward consistency check; see OcclusionParams for the defaults.
OcclusionMask occlusion_mask(const FlowField& flow_fwd, const FlowField& flow_bwd, double alpha,
                             double beta);
inline OcclusionMask occlusion_mask(const FlowField& flow_fwd, const FlowField& flow_bwd,
                                    const OcclusionParams& p = {}) {
  return occlusion_mask(flow_fwd, flow_bwd, p.alpha, p.beta);
}

/// Masked L1 between warp(out_t1, flow) and out_t, normalised by visible pixels x channels.
LossReport flow_consistency_loss(const Frame& out_t, const Frame& out_t1, const FlowField& flow_t1_to_t,
                                 const OcclusionMask& mask);

struct BlockMatchParams {
  int block = 7;
  int search_radius = 4;
};

/// Integer SAD block matching of target against source. Ties prefer the smallest squared
/// displacement, then smaller dy, then smaller dx.
FlowField block_matching_flow(const Frame& target, const Frame& source, int block, int search_radius);
inline FlowField block_matching_flow(const Frame& target, const Frame& source,
                                     const BlockMatchParams& p = {}) {
  return block_matching_flow(target, source, p.block, p.search_radius);
}

/// Middlebury .flo ("PIEH", int32 width, int32 height, float32 dx/dy pairs; little endian).
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

}  // namespace vdm
