#include "vdm/recon_loss.hpp"

#include <cmath>

namespace vdm {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void ScaledOutputs::validate() const {
  if (levels.empty()) throw Error(ErrorCode::kShapeMismatch, "scaled outputs are empty");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const Frame& prev = levels[i - 1];
    const Frame& cur = levels[i];
    if (cur.height != (prev.height + 1) / 2 || cur.width != (prev.width + 1) / 2 ||
        cur.channels != prev.channels) {
      throw Error(ErrorCode::kShapeMismatch, "scale level " + std::to_string(i) + " is not half of level " +
                                                 std::to_string(i - 1));
    }
  }
}

std::vector<Frame> gt_pyramid(const Frame& gt_full, std::size_t levels) {
  std::vector<Frame> out;
  out.reserve(levels);
  out.push_back(gt_full);
  for (std::size_t i = 1; i < levels; ++i) out.push_back(downsample_half(out.back()));
  return out;
}

FeatureExtractor::FeatureExtractor(int in_channels, const FeatureExtractorConfig& cfg) {
  if (cfg.stages < 1 || cfg.filters < 1) throw Error(ErrorCode::kInvalidArgument, "empty feature extractor");
  Rng rng(cfg.seed, 0xfea7);
  int channels = in_channels;
  for (int s = 0; s < cfg.stages; ++s) {
    nn::Conv2d conv(channels, cfg.filters, cfg.kernel, s == 0 ? 1 : 2);
    conv.init_he(rng);
    for (double& b : conv.bias) b = 0.05 * rng.normal();
    stages_.push_back(std::move(conv));
    channels = cfg.filters;
  }
}

FeatureExtractor::FeatureExtractor(std::vector<nn::Conv2d> stages) : stages_(std::move(stages)) {
  if (stages_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty feature extractor");
  for (std::size_t i = 1; i < stages_.size(); ++i) {
    if (stages_[i].in_channels != stages_[i - 1].out_channels) {
      throw Error(ErrorCode::kShapeMismatch, "feature extractor stages do not chain");
    }
  }
}

std::vector<nn::Tensor> FeatureExtractor::features(const Frame& frame) const {
  std::vector<nn::Tensor> out;
  out.reserve(stages_.size());
  nn::Tensor x = nn::to_tensor(frame);
  for (const nn::Conv2d& conv : stages_) {
    x = nn::relu(nn::conv2d(x, conv));
    out.push_back(x);
  }
  return out;
}

Frame FeatureExtractor::backward(const Frame& frame, const std::vector<nn::Tensor>& features,
                                 const std::vector<nn::Tensor>& grad_features) const {
  if (features.size() != stages_.size() || grad_features.size() != stages_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "feature gradient count does not match stage count");
  }
  nn::Tensor grad = grad_features.back();
  for (std::size_t s = stages_.size(); s-- > 0;) {
    grad = nn::relu_backward(features[s], std::move(grad));
    const nn::Tensor input = s == 0 ? nn::to_tensor(frame) : features[s - 1];
    grad = nn::conv2d_backward(input, stages_[s], grad, nullptr);
    if (s > 0) {
      for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += grad_features[s - 1].data[i];
    }
  }
  return nn::to_frame(grad);
}

FrameLossResult frame_loss(const ScaledOutputs& outputs, const Frame& gt_full, const FeatureExtractor& extractor,
                           double lambda_perceptual) {
  outputs.validate();
  require_same_shape(outputs.full(), gt_full, "frame_loss output vs ground truth");
  if (lambda_perceptual < 0.0) throw Error(ErrorCode::kInvalidArgument, "perceptual weight must be >= 0");
  const std::vector<Frame> gts = gt_pyramid(gt_full, outputs.levels.size());

  FrameLossResult result;
  for (std::size_t i = 0; i < outputs.levels.size(); ++i) {
    const Frame& o = outputs.levels[i];
    const Frame& g = gts[i];
    GradientTensor grad(o.height, o.width, o.channels);
    const double inv_n = 1.0 / static_cast<double>(o.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < o.size(); ++k) {
      const double r = o.data[k] - g.data[k];
      sum += std::abs(r);
      grad.data[k] = sign(r) * inv_n;
    }
    result.l1 += sum * inv_n;

    if (lambda_perceptual > 0.0) {
      const std::vector<nn::Tensor> fo = extractor.features(o);
      const std::vector<nn::Tensor> fg = extractor.features(g);
      std::vector<nn::Tensor> grad_features;
      grad_features.reserve(fo.size());
      for (std::size_t l = 0; l < fo.size(); ++l) {
        nn::Tensor gl(fo[l].channels, fo[l].height, fo[l].width);
        const double inv_l = 1.0 / static_cast<double>(fo[l].data.size());
        double layer_sum = 0.0;
        for (std::size_t k = 0; k < fo[l].data.size(); ++k) {
          const double r = fo[l].data[k] - fg[l].data[k];
          layer_sum += std::abs(r);
          gl.data[k] = lambda_perceptual * sign(r) * inv_l;
        }
        result.perceptual += layer_sum * inv_l;
        grad_features.push_back(std::move(gl));
      }
      const Frame back = extractor.backward(o, fo, grad_features);
      for (std::size_t k = 0; k < grad.size(); ++k) grad.data[k] += back.data[k];
    }
    result.grads.push_back(std::move(grad));
  }
  result.value = result.l1 + lambda_perceptual * result.perceptual;
  return result;
}

const char* to_string(TemporalLossKind kind) {
  switch (kind) {
    case TemporalLossKind::kNone: return "none";
    case TemporalLossKind::kFlow: return "flow";
    case TemporalLossKind::kRelationBasic: return "relation_basic";
    case TemporalLossKind::kRelationMultiscale: return "relation_multiscale";
  }
  return "none";
}

TemporalLossKind parse_temporal_loss_kind(const std::string& text) {
  for (auto kind : {TemporalLossKind::kNone, TemporalLossKind::kFlow, TemporalLossKind::kRelationBasic,
                    TemporalLossKind::kRelationMultiscale}) {
    if (text == to_string(kind)) return kind;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown temporal loss kind '" + text + "' (none, flow, relation_basic, relation_multiscale)");
}

LossReport temporal_loss(const Frame& out_t, const Frame& out_t1, const Frame& gt_t, const Frame& gt_t1,
                         const ObjectiveConfig& cfg, const FlowInputs* flow) {
  switch (cfg.temporal_loss_kind) {
    case TemporalLossKind::kNone: {
      LossReport r;
      r.grad_out_t = Frame(out_t.height, out_t.width, out_t.channels);
      r.grad_out_t1 = r.grad_out_t;
      return r;
    }
    case TemporalLossKind::kFlow:
      if (flow == nullptr) {
        throw Error(ErrorCode::kInvalidArgument, "flow-based temporal loss needs flow and occlusion inputs");
      }
      return flow_consistency_loss(out_t, out_t1, flow->flow, flow->mask);
    case TemporalLossKind::kRelationBasic:
      return basic_relation_loss(out_t, out_t1, gt_t, gt_t1);
    case TemporalLossKind::kRelationMultiscale:
      return multi_scale_relation_loss(out_t, out_t1, gt_t, gt_t1, cfg.scales);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown temporal loss kind");
}

ObjectiveResult training_objective(const ScaledOutputs& outputs_t, const ScaledOutputs& outputs_t1,
                                   const Frame& gt_t, const Frame& gt_t1, const ObjectiveConfig& cfg,
                                   const FeatureExtractor& extractor, const FlowInputs* flow) {
  if (cfg.lambda_temporal < 0.0) throw Error(ErrorCode::kInvalidArgument, "temporal weight must be >= 0");
  if (cfg.temporal_loss_kind == TemporalLossKind::kFlow && flow == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "flow-based temporal loss needs flow and occlusion inputs");
  }
  FrameLossResult lt = frame_loss(outputs_t, gt_t, extractor, cfg.lambda_perceptual);
  FrameLossResult lt1 = frame_loss(outputs_t1, gt_t1, extractor, cfg.lambda_perceptual);
  const LossReport temporal = temporal_loss(outputs_t.full(), outputs_t1.full(), gt_t, gt_t1, cfg, flow);

  ObjectiveResult result;
  result.frame_t = lt.value;
  result.frame_t1 = lt1.value;
  result.temporal = temporal.value;
  result.value = lt.value + lt1.value + cfg.lambda_temporal * temporal.value;
  result.grad_t = std::move(lt.grads);
  result.grad_t1 = std::move(lt1.grads);
  if (cfg.lambda_temporal != 0.0) {
    for (std::size_t k = 0; k < result.grad_t[0].size(); ++k) {
      result.grad_t[0].data[k] += cfg.lambda_temporal * temporal.grad_out_t.data[k];
      result.grad_t1[0].data[k] += cfg.lambda_temporal * temporal.grad_out_t1.data[k];
    }
  }
  return result;
}

}  // namespace vdm
