#pragma once

#include <initializer_list>
#include <vector>

#include "vdm/tensor.hpp"

namespace vdm {

/// Region sizes for the multi-scale relation loss: odd, >= 1, strictly ascending.
class ScaleSet {
 public:
  ScaleSet() : sizes_{1, 3, 5, 7} {}
  explicit ScaleSet(std::vector<int> sizes);
  ScaleSet(std::initializer_list<int> sizes) : ScaleSet(std::vector<int>(sizes)) {}

  const std::vector<int>& sizes() const { return sizes_; }
  bool contains(int k) const;

 private:
  std::vector<int> sizes_;
};

/// Scalar loss plus subgradients for the two predicted frames. Shared by the relation
/// losses and the flow-based loss; the latter leaves selected_scale empty.
struct LossReport {
  double value = 0.0;
  GradientTensor grad_out_t;
  GradientTensor grad_out_t1;
  /// Chosen region size per (pixel, channel), laid out like Frame::data.
  std::vector<int> selected_scale;
};
using RelationLossReport = LossReport;

/// k x k box mean centred on each pixel, replicate padding; k = 1 is the identity.
Frame patch_stat(const Frame& frame, int k);

/// Transpose of patch_stat(., k): maps a gradient on the statistic back onto the frame.
Frame patch_stat_adjoint(const Frame& grad, int k);

/// mean |(O^{t+1} - O^t) - (G^{t+1} - G^t)|
LossReport basic_relation_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t,
                               const Frame& gt_t1);

/// For every (pixel, channel) the region size whose predicted temporal change is smallest
/// is selected (ties -> smaller size) and the relation residual is taken at that size.
/// The selection is held fixed when differentiating.
LossReport multi_scale_relation_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t,
                                     const Frame& gt_t1, const ScaleSet& scales = ScaleSet{});

}  // namespace vdm
