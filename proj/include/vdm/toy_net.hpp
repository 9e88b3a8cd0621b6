#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vdm/checkpoint.hpp"
#include "vdm/metrics.hpp"
#include "vdm/nn.hpp"
#include "vdm/recon_loss.hpp"

namespace vdm {

struct ToyModelConfig {
  int channels = 3;   // image channels
  int features = 16;
  int encoder_layers = 2;
  int fusion_layers = 2;
  std::uint64_t seed = 1;
  bool zero_heads = true;  // residual heads start at zero, so the model starts as the identity
};

/// Multi-frame restoration model: space-to-depth input, shared per-frame encoder,
/// softmax blending weights over the three frames, fusion convolutions and three residual
/// heads at full, 1/2 and 1/4 resolution.
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& cfg = {});

  const ToyModelConfig& config() const { return cfg_; }
  std::size_t parameter_count() const;

  /// Every trainable layer with a stable name ("encoder.0", "weight_head", ...).
  std::vector<std::pair<std::string, nn::Conv2d*>> layers();
  std::vector<std::pair<std::string, const nn::Conv2d*>> layers() const;

  /// Incremented by every parameter update; forward caches remember it.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  /// Zeroed layer set shaped like this model, used to hold gradients or optimizer moments.
  ToyModel zeros_like() const;

  std::vector<TensorBlock> to_blocks(const std::string& prefix = "") const;
  static ToyModel from_blocks(const std::vector<TensorBlock>& blocks, const std::string& prefix = "");

 private:
  friend struct ToyModelAccess;
  ToyModelConfig cfg_;
  std::vector<nn::Conv2d> encoder_;
  nn::Conv2d weight_head_;
  std::vector<nn::Conv2d> fusion_;
  nn::Conv2d head_full_;
  nn::Conv2d head_half_;
  nn::Conv2d head_quarter_;
  std::uint64_t version_ = 0;
};

/// Three consecutive frames (t-1, t, t+1).
using FrameWindow = std::array<Frame, 3>;

/// Window centred on `t` with clip ends replicated.
FrameWindow window_at(const VideoClip& clip, std::size_t t);
/// Three copies of the centre frame (single-frame mode).
FrameWindow single_frame_window(const Frame& center);

struct ForwardCache {
  std::uint64_t model_version = 0;
  int height = 0;
  int width = 0;
  std::array<nn::Tensor, 3> input;     // space-to-depth frames
  std::array<std::vector<nn::Tensor>, 3> encoder_out;  // post-ReLU, one per encoder layer
  nn::Tensor logits;
  nn::Tensor weights;                  // 3 planes, softmax over frames
  nn::Tensor aggregated;
  std::vector<nn::Tensor> fusion_out;  // post-ReLU
  nn::Tensor pooled;
};

struct ForwardResult {
  ScaledOutputs outputs;
  nn::Tensor weights;  // (3, H/2, W/2)
  ForwardCache cache;
};

/// Frames must share a shape with height and width divisible by 4.
ForwardResult forward(const ToyModel& model, const FrameWindow& window);

/// Reverse-mode gradients for every layer. Throws kStaleCache if the model changed since
/// the forward pass that produced `cache`.
ToyModel backward(const ToyModel& model, const ForwardCache& cache, const std::vector<GradientTensor>& grad_outputs);

/// Adds `scale * other` into `into`, layer by layer.
void accumulate(ToyModel& into, const ToyModel& other, double scale = 1.0);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ToyModel& model, const AdamConfig& cfg = {});
  void step(ToyModel& model, const ToyModel& grads, double lr);
  std::uint64_t steps() const { return steps_; }

  std::vector<TensorBlock> to_blocks() const;
  void load_blocks(const std::vector<TensorBlock>& blocks);

 private:
  AdamConfig cfg_;
  ToyModel m_;
  ToyModel v_;
  std::uint64_t steps_ = 0;
};

/// Cosine annealing from base_lr at epoch 0 towards min_lr at `epochs`.
double cosine_learning_rate(double base_lr, double min_lr, int epoch, int epochs);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 1;
  double base_lr = 2e-4;
  double min_lr = 0.0;
  /// First epoch with the temporal term; negative means "last sixth of training".
  int temporal_start_epoch = -1;
  int crop = 0;  // square training crops (multiple of 4); 0 = full frames
  bool single_frame = false;
  ObjectiveConfig objective{};
  ToyModelConfig model{};
  FeatureExtractorConfig extractor{};
  AdamConfig adam{};
  BlockMatchParams flow_block_match{};
  OcclusionParams occlusion{};
  std::uint64_t seed = 1;

  int resolved_temporal_start() const { return temporal_start_epoch >= 0 ? temporal_start_epoch : epochs - epochs / 6; }
};

void validate(const TrainConfig& cfg);

struct TrainingPair {
  VideoClip degraded;
  VideoClip clean;
};

struct EpochLog {
  int epoch = 0;
  double frame_loss = 0.0;
  double temporal_loss = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
};

void write_training_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

/// Stateful trainer so a run can stop after any epoch, checkpoint, and resume bit-identically.
class Trainer {
 public:
  Trainer(std::vector<TrainingPair> data, const TrainConfig& cfg);
  /// Resumes from a checkpoint written by save_checkpoint.
  Trainer(std::vector<TrainingPair> data, const TrainConfig& cfg, const std::vector<TensorBlock>& checkpoint);

  int epoch() const { return epoch_; }
  bool done() const { return epoch_ >= cfg_.epochs; }
  void run_epoch();
  void run_to_end();

  const ToyModel& model() const { return model_; }
  const std::vector<EpochLog>& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }

  std::vector<TensorBlock> checkpoint_blocks() const;
  void save_checkpoint(const std::filesystem::path& path) const;

 private:
  void prepare();
  void step_averaged(const ToyModel& grad_sum, int count, double lr);

  std::vector<TrainingPair> data_;
  TrainConfig cfg_;
  FeatureExtractor extractor_;
  ToyModel model_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<EpochLog> log_;
  std::vector<ClipFlows> flows_;  // ground-truth flows, only for the flow-based loss
};

struct TrainResult {
  ToyModel model;
  std::vector<EpochLog> log;
};

TrainResult train(std::vector<TrainingPair> dataset, const TrainConfig& cfg);

/// Model checkpoint without optimizer state.
void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

/// Restores every frame of a clip (clip ends replicated) and clamps to [0,1].
VideoClip restore_clip(const ToyModel& model, const VideoClip& degraded, bool single_frame = false);

struct ClipEvaluation {
  MetricReport psnr;
  MetricReport ssim;
  MetricReport warping;
};

struct EvaluationBundle {
  std::vector<ClipEvaluation> clips;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_warping = 0.0;
};

/// Flows used for the warping error of clip i; by default block matching on the clean clip.
using FlowSource = std::function<ClipFlows(std::size_t clip_index, const VideoClip& clean)>;
FlowSource block_matching_flow_source(const BlockMatchParams& bm = {}, const OcclusionParams& occ = {});

/// Evaluates `predictions` (already restored) against the clean clips.
EvaluationBundle evaluate_predictions(const std::vector<VideoClip>& predictions,
                                      const std::vector<TrainingPair>& dataset, const FlowSource& flows);

/// Restores every degraded clip, scores it and optionally writes the restored frames to
/// out_dir/clip_XXX/.
EvaluationBundle evaluate(const ToyModel& model, const std::vector<TrainingPair>& dataset, const FlowSource& flows,
                          bool single_frame = false, const std::optional<std::filesystem::path>& out_dir = {});

}  // namespace vdm
