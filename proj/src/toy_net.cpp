#include "vdm/toy_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "vdm/image_io.hpp"

namespace vdm {

struct ToyModelAccess {
  static std::vector<nn::Conv2d>& encoder(ToyModel& m) { return m.encoder_; }
  static const std::vector<nn::Conv2d>& encoder(const ToyModel& m) { return m.encoder_; }
  static const nn::Conv2d& weight_head(const ToyModel& m) { return m.weight_head_; }
  static const std::vector<nn::Conv2d>& fusion(const ToyModel& m) { return m.fusion_; }
  static const nn::Conv2d& head_full(const ToyModel& m) { return m.head_full_; }
  static const nn::Conv2d& head_half(const ToyModel& m) { return m.head_half_; }
  static const nn::Conv2d& head_quarter(const ToyModel& m) { return m.head_quarter_; }
};

namespace {

using A = ToyModelAccess;

nn::Tensor add(nn::Tensor a, const nn::Tensor& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
  return a;
}

Frame add_frame(const Frame& base, const nn::Tensor& residual) {
  Frame out = base;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c) out.at(y, x, c) += residual.at(c, y, x);
  return out;
}

Frame crop_frame(const Frame& f, int y0, int x0, int size) {
  Frame out(size, size, f.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < f.channels; ++c) out.at(y, x, c) = f.at(y0 + y, x0 + x, c);
  return out;
}

FlowField crop_flow(const FlowField& f, int y0, int x0, int size) {
  FlowField out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      out.dx(y, x) = f.dx(y0 + y, x0 + x);
      out.dy(y, x) = f.dy(y0 + y, x0 + x);
    }
  return out;
}

OcclusionMask crop_mask(const OcclusionMask& m, int y0, int x0, int size) {
  OcclusionMask out(size, size, 0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out.visible[static_cast<std::size_t>(y) * size + x] =
          m.visible[static_cast<std::size_t>(y0 + y) * m.width + x0 + x];
  return out;
}

void require_block(const TensorBlock& b, std::size_t count) {
  if (b.values.size() != count) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint block '" + b.name + "' has the wrong size");
  }
}

}  // namespace

ToyModel::ToyModel(const ToyModelConfig& cfg) : cfg_(cfg) {
  if (cfg.channels < 1 || cfg.features < 1 || cfg.encoder_layers < 1 || cfg.fusion_layers < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid toy model configuration");
  }
  Rng rng(cfg.seed, 0x70e);
  int in = 4 * cfg.channels;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    encoder_.emplace_back(in, cfg.features, 3);
    encoder_.back().init_he(rng);
    in = cfg.features;
  }
  weight_head_ = nn::Conv2d(3 * cfg.features, 3, 1);
  weight_head_.init_he(rng, 0.5);
  for (int l = 0; l < cfg.fusion_layers; ++l) {
    fusion_.emplace_back(cfg.features, cfg.features, 3);
    fusion_.back().init_he(rng);
  }
  head_full_ = nn::Conv2d(cfg.features, 4 * cfg.channels, 3);
  head_half_ = nn::Conv2d(cfg.features, cfg.channels, 3);
  head_quarter_ = nn::Conv2d(cfg.features, cfg.channels, 3);
  if (!cfg.zero_heads) {
    head_full_.init_he(rng, 0.1);
    head_half_.init_he(rng, 0.1);
    head_quarter_.init_he(rng, 0.1);
  }
}

std::vector<std::pair<std::string, nn::Conv2d*>> ToyModel::layers() {
  std::vector<std::pair<std::string, nn::Conv2d*>> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) out.emplace_back("encoder." + std::to_string(i), &encoder_[i]);
  out.emplace_back("weight_head", &weight_head_);
  for (std::size_t i = 0; i < fusion_.size(); ++i) out.emplace_back("fusion." + std::to_string(i), &fusion_[i]);
  out.emplace_back("head.full", &head_full_);
  out.emplace_back("head.half", &head_half_);
  out.emplace_back("head.quarter", &head_quarter_);
  return out;
}

std::vector<std::pair<std::string, const nn::Conv2d*>> ToyModel::layers() const {
  std::vector<std::pair<std::string, const nn::Conv2d*>> out;
  for (auto& [name, layer] : const_cast<ToyModel*>(this)->layers()) out.emplace_back(name, layer);
  return out;
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, layer] : layers()) n += layer->parameter_count();
  return n;
}

ToyModel ToyModel::zeros_like() const {
  ToyModel z = *this;
  for (auto& [name, layer] : z.layers()) {
    std::fill(layer->weight.begin(), layer->weight.end(), 0.0);
    std::fill(layer->bias.begin(), layer->bias.end(), 0.0);
  }
  z.version_ = 0;
  return z;
}

std::vector<TensorBlock> ToyModel::to_blocks(const std::string& prefix) const {
  std::vector<TensorBlock> blocks;
  blocks.push_back({prefix + "config",
                    {6},
                    {static_cast<double>(cfg_.channels), static_cast<double>(cfg_.features),
                     static_cast<double>(cfg_.encoder_layers), static_cast<double>(cfg_.fusion_layers),
                     static_cast<double>(cfg_.seed), cfg_.zero_heads ? 1.0 : 0.0}});
  for (const auto& [name, layer] : layers()) {
    blocks.push_back({prefix + name + ".weight",
                      {static_cast<std::uint64_t>(layer->out_channels), static_cast<std::uint64_t>(layer->in_channels),
                       static_cast<std::uint64_t>(layer->kernel), static_cast<std::uint64_t>(layer->kernel)},
                      layer->weight});
    blocks.push_back({prefix + name + ".bias", {static_cast<std::uint64_t>(layer->out_channels)}, layer->bias});
  }
  return blocks;
}

ToyModel ToyModel::from_blocks(const std::vector<TensorBlock>& blocks, const std::string& prefix) {
  const TensorBlock& c = find_block(blocks, prefix + "config");
  require_block(c, 6);
  ToyModelConfig cfg;
  cfg.channels = static_cast<int>(c.values[0]);
  cfg.features = static_cast<int>(c.values[1]);
  cfg.encoder_layers = static_cast<int>(c.values[2]);
  cfg.fusion_layers = static_cast<int>(c.values[3]);
  cfg.seed = static_cast<std::uint64_t>(c.values[4]);
  cfg.zero_heads = c.values[5] != 0.0;
  ToyModel model(cfg);
  for (auto& [name, layer] : model.layers()) {
    const TensorBlock& w = find_block(blocks, prefix + name + ".weight");
    const TensorBlock& b = find_block(blocks, prefix + name + ".bias");
    require_block(w, layer->weight.size());
    require_block(b, layer->bias.size());
    layer->weight = w.values;
    layer->bias = b.values;
  }
  return model;
}

FrameWindow window_at(const VideoClip& clip, std::size_t t) {
  if (t >= clip.size()) throw Error(ErrorCode::kInvalidArgument, "window centre outside the clip");
  const std::size_t prev = t == 0 ? 0 : t - 1;
  const std::size_t next = std::min(t + 1, clip.size() - 1);
  return {clip[prev], clip[t], clip[next]};
}

FrameWindow single_frame_window(const Frame& center) { return {center, center, center}; }

ForwardResult forward(const ToyModel& model, const FrameWindow& window) {
  const Frame& center = window[1];
  for (const Frame& f : window) require_same_shape(center, f, "toy model window");
  if (center.channels != model.config().channels) {
    throw Error(ErrorCode::kShapeMismatch, "toy model expects " + std::to_string(model.config().channels) + " channels");
  }
  if (center.height % 4 != 0 || center.width % 4 != 0 || center.height == 0 || center.width == 0) {
    throw Error(ErrorCode::kShapeMismatch, "toy model needs height and width divisible by 4");
  }
  const int features = model.config().features;

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.model_version = model.version();
  cache.height = center.height;
  cache.width = center.width;
  for (int f = 0; f < 3; ++f) {
    cache.input[f] = nn::space_to_depth(nn::to_tensor(window[f]));
    const nn::Tensor* x = &cache.input[f];
    for (const nn::Conv2d& conv : A::encoder(model)) {
      cache.encoder_out[f].push_back(nn::relu(nn::conv2d(*x, conv)));
      x = &cache.encoder_out[f].back();
    }
  }
  const int h2 = cache.input[0].height;
  const int w2 = cache.input[0].width;
  const std::size_t plane = static_cast<std::size_t>(h2) * w2;

  nn::Tensor concat(3 * features, h2, w2);
  for (int f = 0; f < 3; ++f) {
    const auto& feat = cache.encoder_out[f].back().data;
    std::copy(feat.begin(), feat.end(), concat.data.begin() + static_cast<std::ptrdiff_t>(f * features * plane));
  }
  cache.logits = nn::conv2d(concat, A::weight_head(model));
  cache.weights = nn::Tensor(3, h2, w2);
  for (std::size_t p = 0; p < plane; ++p) {
    const double m = std::max({cache.logits.data[p], cache.logits.data[plane + p], cache.logits.data[2 * plane + p]});
    double e[3];
    double sum = 0.0;
    for (int f = 0; f < 3; ++f) sum += (e[f] = std::exp(cache.logits.data[f * plane + p] - m));
    for (int f = 0; f < 3; ++f) cache.weights.data[f * plane + p] = e[f] / sum;
  }
  cache.aggregated = nn::Tensor(features, h2, w2);
  for (int f = 0; f < 3; ++f) {
    const auto& feat = cache.encoder_out[f].back().data;
    for (int c = 0; c < features; ++c)
      for (std::size_t p = 0; p < plane; ++p)
        cache.aggregated.data[c * plane + p] += cache.weights.data[f * plane + p] * feat[c * plane + p];
  }
  const nn::Tensor* x = &cache.aggregated;
  for (const nn::Conv2d& conv : A::fusion(model)) {
    cache.fusion_out.push_back(nn::relu(nn::conv2d(*x, conv)));
    x = &cache.fusion_out.back();
  }
  const nn::Tensor& trunk = *x;
  cache.pooled = nn::mean_pool2(trunk);

  const nn::Tensor r_full = nn::depth_to_space(nn::conv2d(trunk, A::head_full(model)));
  const nn::Tensor r_half = nn::conv2d(trunk, A::head_half(model));
  const nn::Tensor r_quarter = nn::conv2d(cache.pooled, A::head_quarter(model));
  const Frame center_half = downsample_half(center);
  const Frame center_quarter = downsample_half(center_half);
  result.outputs.levels = {add_frame(center, r_full), add_frame(center_half, r_half),
                           add_frame(center_quarter, r_quarter)};
  result.weights = cache.weights;
  return result;
}

ToyModel backward(const ToyModel& model, const ForwardCache& cache, const std::vector<GradientTensor>& grad_outputs) {
  if (cache.model_version != model.version() || cache.input[0].data.empty()) {
    throw Error(ErrorCode::kStaleCache, "forward cache does not belong to the current model parameters");
  }
  if (grad_outputs.size() != 3) throw Error(ErrorCode::kShapeMismatch, "backward expects three output gradients");
  ToyModel grads = model.zeros_like();
  auto glayers = grads.layers();
  std::size_t li = 0;
  const auto next_grad = [&]() { return glayers[li++].second; };

  std::vector<nn::Conv2d*> g_encoder, g_fusion;
  for (std::size_t i = 0; i < A::encoder(model).size(); ++i) g_encoder.push_back(next_grad());
  nn::Conv2d* g_weight_head = next_grad();
  for (std::size_t i = 0; i < A::fusion(model).size(); ++i) g_fusion.push_back(next_grad());
  nn::Conv2d* g_full = next_grad();
  nn::Conv2d* g_half = next_grad();
  nn::Conv2d* g_quarter = next_grad();

  const nn::Tensor& trunk = cache.fusion_out.empty() ? cache.aggregated : cache.fusion_out.back();
  const int features = model.config().features;
  const std::size_t plane = cache.aggregated.plane();

  // Heads.
  nn::Tensor d_trunk =
      nn::conv2d_backward(trunk, A::head_full(model), nn::space_to_depth(nn::to_tensor(grad_outputs[0])), g_full);
  d_trunk = add(std::move(d_trunk), nn::conv2d_backward(trunk, A::head_half(model), nn::to_tensor(grad_outputs[1]), g_half));
  const nn::Tensor d_pooled =
      nn::conv2d_backward(cache.pooled, A::head_quarter(model), nn::to_tensor(grad_outputs[2]), g_quarter);
  d_trunk = add(std::move(d_trunk), nn::mean_pool2_adjoint(d_pooled, trunk.height, trunk.width));

  // Fusion.
  nn::Tensor d = std::move(d_trunk);
  for (std::size_t l = A::fusion(model).size(); l-- > 0;) {
    const nn::Tensor& in = l == 0 ? cache.aggregated : cache.fusion_out[l - 1];
    d = nn::relu_backward(cache.fusion_out[l], std::move(d));
    d = nn::conv2d_backward(in, A::fusion(model)[l], d, g_fusion[l]);
  }
  const nn::Tensor& d_agg = d;

  // Blending: agg = sum_f w_f * F_f.
  std::array<nn::Tensor, 3> d_feat;
  nn::Tensor d_w(3, cache.aggregated.height, cache.aggregated.width);
  for (int f = 0; f < 3; ++f) {
    const auto& feat = cache.encoder_out[f].back().data;
    d_feat[f] = nn::Tensor(features, cache.aggregated.height, cache.aggregated.width);
    for (int c = 0; c < features; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double g = d_agg.data[c * plane + p];
        d_feat[f].data[c * plane + p] = cache.weights.data[f * plane + p] * g;
        d_w.data[f * plane + p] += feat[c * plane + p] * g;
      }
  }
  // Softmax over frames.
  nn::Tensor d_logits(3, cache.aggregated.height, cache.aggregated.width);
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0;
    for (int f = 0; f < 3; ++f) dot += cache.weights.data[f * plane + p] * d_w.data[f * plane + p];
    for (int f = 0; f < 3; ++f) {
      d_logits.data[f * plane + p] = cache.weights.data[f * plane + p] * (d_w.data[f * plane + p] - dot);
    }
  }
  nn::Tensor concat(3 * features, cache.aggregated.height, cache.aggregated.width);
  for (int f = 0; f < 3; ++f) {
    const auto& feat = cache.encoder_out[f].back().data;
    std::copy(feat.begin(), feat.end(), concat.data.begin() + static_cast<std::ptrdiff_t>(f * features * plane));
  }
  const nn::Tensor d_concat = nn::conv2d_backward(concat, A::weight_head(model), d_logits, g_weight_head);
  for (int f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < features * plane; ++i) d_feat[f].data[i] += d_concat.data[f * features * plane + i];

  // Shared encoder.
  for (int f = 0; f < 3; ++f) {
    nn::Tensor g = std::move(d_feat[f]);
    for (std::size_t l = A::encoder(model).size(); l-- > 0;) {
      const nn::Tensor& in = l == 0 ? cache.input[f] : cache.encoder_out[f][l - 1];
      g = nn::relu_backward(cache.encoder_out[f][l], std::move(g));
      g = nn::conv2d_backward(in, A::encoder(model)[l], g, g_encoder[l], l > 0);
    }
  }
  return grads;
}

void accumulate(ToyModel& into, const ToyModel& other, double scale) {
  auto a = into.layers();
  const auto b = other.layers();
  if (a.size() != b.size()) throw Error(ErrorCode::kShapeMismatch, "models differ in layer count");
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].second->weight.size(); ++k) a[i].second->weight[k] += scale * b[i].second->weight[k];
    for (std::size_t k = 0; k < a[i].second->bias.size(); ++k) a[i].second->bias[k] += scale * b[i].second->bias[k];
  }
}

Adam::Adam(const ToyModel& model, const AdamConfig& cfg) : cfg_(cfg), m_(model.zeros_like()), v_(model.zeros_like()) {}

void Adam::step(ToyModel& model, const ToyModel& grads, double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  auto p = model.layers();
  const auto g = grads.layers();
  auto m = m_.layers();
  auto v = v_.layers();
  const auto update = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& mom,
                          std::vector<double>& var) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      mom[k] = cfg_.beta1 * mom[k] + (1.0 - cfg_.beta1) * grad[k];
      var[k] = cfg_.beta2 * var[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
      param[k] -= lr * (mom[k] / bc1) / (std::sqrt(var[k] / bc2) + cfg_.epsilon);
    }
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    update(p[i].second->weight, g[i].second->weight, m[i].second->weight, v[i].second->weight);
    update(p[i].second->bias, g[i].second->bias, m[i].second->bias, v[i].second->bias);
  }
  model.bump_version();
}

std::vector<TensorBlock> Adam::to_blocks() const {
  std::vector<TensorBlock> blocks = m_.to_blocks("adam.m.");
  for (auto& b : v_.to_blocks("adam.v.")) blocks.push_back(std::move(b));
  blocks.push_back({"adam.steps", {1}, {static_cast<double>(steps_)}});
  return blocks;
}

void Adam::load_blocks(const std::vector<TensorBlock>& blocks) {
  m_ = ToyModel::from_blocks(blocks, "adam.m.");
  v_ = ToyModel::from_blocks(blocks, "adam.v.");
  steps_ = static_cast<std::uint64_t>(find_block(blocks, "adam.steps").values.at(0));
}

double cosine_learning_rate(double base_lr, double min_lr, int epoch, int epochs) {
  if (epochs <= 0) return base_lr;
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * epoch / epochs));
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (cfg.batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (cfg.base_lr < 0.0 || cfg.min_lr < 0.0) throw Error(ErrorCode::kInvalidArgument, "learning rates must be >= 0");
  if (cfg.resolved_temporal_start() > cfg.epochs) {
    throw Error(ErrorCode::kInvalidArgument, "temporal activation epoch exceeds epoch count");
  }
  if (cfg.crop < 0 || cfg.crop % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "crop must be a multiple of 4");
  if (cfg.objective.lambda_perceptual < 0.0 || cfg.objective.lambda_temporal < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "loss weights must be >= 0");
  }
}

void write_training_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(12) << "epoch,frame_loss,temporal_loss,total,learning_rate\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << e.frame_loss << ',' << e.temporal_loss << ',' << e.total << ',' << e.learning_rate << '\n';
  }
}

Trainer::Trainer(std::vector<TrainingPair> data, const TrainConfig& cfg)
    : data_(std::move(data)),
      cfg_(cfg),
      extractor_(cfg.model.channels, cfg.extractor),
      model_(cfg.model),
      adam_(model_, cfg.adam) {
  prepare();
}

Trainer::Trainer(std::vector<TrainingPair> data, const TrainConfig& cfg, const std::vector<TensorBlock>& checkpoint)
    : data_(std::move(data)),
      cfg_(cfg),
      extractor_(cfg.model.channels, cfg.extractor),
      model_(ToyModel::from_blocks(checkpoint, "model.")),
      adam_(model_, cfg.adam) {
  prepare();
  adam_.load_blocks(checkpoint);
  epoch_ = static_cast<int>(find_block(checkpoint, "trainer.epoch").values.at(0));
  const TensorBlock& log = find_block(checkpoint, "trainer.log");
  if (log.values.size() % 5 != 0) throw Error(ErrorCode::kCorruptStream, "malformed training log block");
  for (std::size_t i = 0; i < log.values.size(); i += 5) {
    log_.push_back({static_cast<int>(log.values[i]), log.values[i + 1], log.values[i + 2], log.values[i + 3],
                    log.values[i + 4]});
  }
}

void Trainer::prepare() {
  validate(cfg_);
  if (data_.empty()) throw Error(ErrorCode::kInvalidArgument, "training dataset is empty");
  for (const TrainingPair& p : data_) {
    validate_clip(p.degraded);
    validate_clip(p.clean);
    if (p.degraded.size() < 3) throw Error(ErrorCode::kInvalidArgument, "training clips need at least 3 frames");
    if (p.degraded.size() != p.clean.size()) throw Error(ErrorCode::kShapeMismatch, "paired clips differ in length");
    require_same_shape(p.degraded[0], p.clean[0], "paired clips");
    if (cfg_.crop > 0 && (cfg_.crop > p.clean[0].height || cfg_.crop > p.clean[0].width)) {
      throw Error(ErrorCode::kInvalidArgument, "crop exceeds frame size");
    }
  }
  if (cfg_.objective.temporal_loss_kind == TemporalLossKind::kFlow) {
    for (const TrainingPair& p : data_) flows_.push_back(estimate_clip_flows(p.clean, cfg_.flow_block_match, cfg_.occlusion));
  }
}

void Trainer::step_averaged(const ToyModel& grad_sum, int count, double lr) {
  if (count == 1) {
    adam_.step(model_, grad_sum, lr);
    return;
  }
  ToyModel mean = grad_sum.zeros_like();
  accumulate(mean, grad_sum, 1.0 / count);
  adam_.step(model_, mean, lr);
}

void Trainer::run_epoch() {
  if (done()) return;
  const double lr = cosine_learning_rate(cfg_.base_lr, cfg_.min_lr, epoch_, cfg_.epochs);
  const bool temporal_on = epoch_ >= cfg_.resolved_temporal_start();
  ObjectiveConfig objective = cfg_.objective;
  if (!temporal_on) objective.lambda_temporal = 0.0;

  struct Sample {
    std::size_t clip, t;
  };
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < data_.size(); ++c)
    for (std::size_t t = 0; t + 1 < data_[c].clean.size(); ++t) samples.push_back({c, t});
  Rng rng(cfg_.seed, 0x100000 + static_cast<std::uint64_t>(epoch_));
  for (std::size_t i = samples.size(); i > 1; --i) std::swap(samples[i - 1], samples[rng.below(i)]);

  double sum_frame = 0.0, sum_temporal = 0.0, sum_total = 0.0;
  ToyModel grad_acc = model_.zeros_like();
  int pending = 0;
  for (const Sample& s : samples) {
    const TrainingPair& pair = data_[s.clip];
    FrameWindow w0 = cfg_.single_frame ? single_frame_window(pair.degraded[s.t]) : window_at(pair.degraded, s.t);
    FrameWindow w1 =
        cfg_.single_frame ? single_frame_window(pair.degraded[s.t + 1]) : window_at(pair.degraded, s.t + 1);
    Frame gt0 = pair.clean[s.t];
    Frame gt1 = pair.clean[s.t + 1];
    std::optional<FlowInputs> flow;
    if (cfg_.objective.temporal_loss_kind == TemporalLossKind::kFlow) {
      flow = FlowInputs{flows_[s.clip].flows[s.t], flows_[s.clip].masks[s.t]};
    }
    const int h = gt0.height;
    const int w = gt0.width;
    if (cfg_.crop > 0 && (cfg_.crop < h || cfg_.crop < w)) {
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - cfg_.crop + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cfg_.crop + 1)));
      for (Frame& f : w0) f = crop_frame(f, y0, x0, cfg_.crop);
      for (Frame& f : w1) f = crop_frame(f, y0, x0, cfg_.crop);
      gt0 = crop_frame(gt0, y0, x0, cfg_.crop);
      gt1 = crop_frame(gt1, y0, x0, cfg_.crop);
      if (flow) {
        flow->flow = crop_flow(flow->flow, y0, x0, cfg_.crop);
        flow->mask = crop_mask(flow->mask, y0, x0, cfg_.crop);
      }
    }

    const ForwardResult f0 = forward(model_, w0);
    const ForwardResult f1 = forward(model_, w1);
    const ObjectiveResult obj =
        training_objective(f0.outputs, f1.outputs, gt0, gt1, objective, extractor_, flow ? &*flow : nullptr);
    sum_frame += obj.frame_t + obj.frame_t1;
    sum_temporal += obj.temporal;
    sum_total += obj.value;

    accumulate(grad_acc, backward(model_, f0.cache, obj.grad_t));
    accumulate(grad_acc, backward(model_, f1.cache, obj.grad_t1));
    if (++pending == cfg_.batch_size) {
      step_averaged(grad_acc, pending, lr);
      grad_acc = model_.zeros_like();
      pending = 0;
    }
  }
  if (pending > 0) step_averaged(grad_acc, pending, lr);
  const double n = static_cast<double>(samples.size());
  log_.push_back({epoch_, sum_frame / n, sum_temporal / n, sum_total / n, lr});
  ++epoch_;
}

void Trainer::run_to_end() {
  while (!done()) run_epoch();
}

std::vector<TensorBlock> Trainer::checkpoint_blocks() const {
  std::vector<TensorBlock> blocks = model_.to_blocks("model.");
  for (auto& b : adam_.to_blocks()) blocks.push_back(std::move(b));
  blocks.push_back({"trainer.epoch", {1}, {static_cast<double>(epoch_)}});
  TensorBlock log{"trainer.log", {static_cast<std::uint64_t>(log_.size()), 5}, {}};
  for (const EpochLog& e : log_) {
    log.values.insert(log.values.end(), {static_cast<double>(e.epoch), e.frame_loss, e.temporal_loss, e.total,
                                         e.learning_rate});
  }
  blocks.push_back(std::move(log));
  return blocks;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { write_checkpoint(checkpoint_blocks(), path); }

TrainResult train(std::vector<TrainingPair> dataset, const TrainConfig& cfg) {
  Trainer trainer(std::move(dataset), cfg);
  trainer.run_to_end();
  return {trainer.model(), trainer.log()};
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
  write_checkpoint(model.to_blocks("model."), path);
}

ToyModel load_model(const std::filesystem::path& path) { return ToyModel::from_blocks(read_checkpoint(path), "model."); }

VideoClip restore_clip(const ToyModel& model, const VideoClip& degraded, bool single_frame) {
  validate_clip(degraded);
  VideoClip out;
  out.frame_rate = degraded.frame_rate;
  for (std::size_t t = 0; t < degraded.size(); ++t) {
    const FrameWindow w = single_frame ? single_frame_window(degraded[t]) : window_at(degraded, t);
    out.frames.push_back(clamp01(forward(model, w).outputs.levels[0]));
  }
  return out;
}

FlowSource block_matching_flow_source(const BlockMatchParams& bm, const OcclusionParams& occ) {
  return [bm, occ](std::size_t, const VideoClip& clean) { return estimate_clip_flows(clean, bm, occ); };
}

EvaluationBundle evaluate_predictions(const std::vector<VideoClip>& predictions,
                                      const std::vector<TrainingPair>& dataset, const FlowSource& flows) {
  if (predictions.size() != dataset.size()) throw Error(ErrorCode::kShapeMismatch, "prediction/dataset count mismatch");
  EvaluationBundle bundle;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    ClipEvaluation e;
    e.psnr = psnr_report(predictions[i], dataset[i].clean);
    e.ssim = ssim_report(predictions[i], dataset[i].clean);
    e.warping = warping_report(predictions[i], flows(i, dataset[i].clean));
    bundle.mean_psnr += e.psnr.mean;
    bundle.mean_ssim += e.ssim.mean;
    bundle.mean_warping += e.warping.mean;
    bundle.clips.push_back(std::move(e));
  }
  if (!dataset.empty()) {
    const double n = static_cast<double>(dataset.size());
    bundle.mean_psnr /= n;
    bundle.mean_ssim /= n;
    bundle.mean_warping /= n;
  }
  return bundle;
}

EvaluationBundle evaluate(const ToyModel& model, const std::vector<TrainingPair>& dataset, const FlowSource& flows,
                          bool single_frame, const std::optional<std::filesystem::path>& out_dir) {
  std::vector<VideoClip> predictions;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    predictions.push_back(restore_clip(model, dataset[i].degraded, single_frame));
    if (out_dir) {
      char name[32];
      std::snprintf(name, sizeof(name), "clip_%03zu", i);
      save_clip_dir(predictions.back(), *out_dir / name);
    }
  }
  return evaluate_predictions(predictions, dataset, flows);
}

}  // namespace vdm
