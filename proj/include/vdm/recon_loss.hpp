#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdm/flow.hpp"
#include "vdm/nn.hpp"
#include "vdm/relation_loss.hpp"
#include "vdm/tensor.hpp"

namespace vdm {

/// Predictions at full, 1/2 and 1/4 resolution; levels[0] is the final output frame.
struct ScaledOutputs {
  std::vector<Frame> levels;

  const Frame& full() const { return levels.front(); }
  /// Throws kShapeMismatch unless each level is ceil-half of the previous one.
  void validate() const;
};

/// Ground truth pyramid built by repeated 2x2 mean pooling.
std::vector<Frame> gt_pyramid(const Frame& gt_full, std::size_t levels);

struct FeatureExtractorConfig {
  int stages = 3;
  int filters = 8;
  int kernel = 3;
  std::uint64_t seed = 0x5eed;
};

/// Frozen perceptual feature pyramid: a seeded random conv + ReLU per stage, stride 2
/// between stages. Stands in for pretrained classification features; explicit layers can be
/// supplied instead.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(int in_channels, const FeatureExtractorConfig& cfg = {});
  explicit FeatureExtractor(std::vector<nn::Conv2d> stages);

  std::size_t stage_count() const { return stages_.size(); }
  const std::vector<nn::Conv2d>& stages() const { return stages_; }

  /// Post-ReLU activations of every stage.
  std::vector<nn::Tensor> features(const Frame& frame) const;

  /// d(loss)/d(frame) given d(loss)/d(features[l]) for every stage.
  Frame backward(const Frame& frame, const std::vector<nn::Tensor>& features,
                 const std::vector<nn::Tensor>& grad_features) const;

 private:
  std::vector<nn::Conv2d> stages_;
};

struct FrameLossResult {
  double value = 0.0;
  double l1 = 0.0;
  double perceptual = 0.0;  // unweighted sum over scales and layers
  std::vector<GradientTensor> grads;  // one per output level
};

/// Sum over levels of mean|O - G| + lambda * sum over layers of mean|phi(O) - phi(G)|.
FrameLossResult frame_loss(const ScaledOutputs& outputs, const Frame& gt_full, const FeatureExtractor& extractor,
                           double lambda_perceptual);

enum class TemporalLossKind { kNone, kFlow, kRelationBasic, kRelationMultiscale };

const char* to_string(TemporalLossKind kind);
TemporalLossKind parse_temporal_loss_kind(const std::string& text);

struct ObjectiveConfig {
  double lambda_perceptual = 0.5;
  double lambda_temporal = 50.0;
  ScaleSet scales{};
  TemporalLossKind temporal_loss_kind = TemporalLossKind::kRelationMultiscale;
};

struct FlowInputs {
  FlowField flow;  // t+1 -> t
  OcclusionMask mask;
};

struct ObjectiveResult {
  double value = 0.0;
  double frame_t = 0.0;
  double frame_t1 = 0.0;
  double temporal = 0.0;  // unweighted
  std::vector<GradientTensor> grad_t;
  std::vector<GradientTensor> grad_t1;
};

/// frame_loss(t) + frame_loss(t+1) + lambda_t * temporal(O^t, O^{t+1}) on the full-resolution
/// outputs. `flow` must be non-null when the flow-based temporal loss is selected.
ObjectiveResult training_objective(const ScaledOutputs& outputs_t, const ScaledOutputs& outputs_t1,
                                   const Frame& gt_t, const Frame& gt_t1, const ObjectiveConfig& cfg,
                                   const FeatureExtractor& extractor, const FlowInputs* flow = nullptr);

/// Temporal term alone, dispatched on kind (zero report for kNone).
LossReport temporal_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t, const Frame& gt_t1,
                         const ObjectiveConfig& cfg, const FlowInputs* flow);

}  // namespace vdm
