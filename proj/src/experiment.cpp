#include "vdm/experiment.hpp"

#include <chrono>
#include <map>

#include "vdm/config.hpp"

namespace vdm {

std::vector<TrainingPair> synthetic_dataset(const SynthConfig& base, std::uint64_t seed, std::size_t first,
                                            std::size_t count) {
  std::vector<TrainingPair> data;
  for (std::size_t i = first; i < first + count; ++i) {
    SynthConfig cfg = base;
    cfg.seed = clip_seed(seed, i);
    VideoClip clean = generate_clean(cfg);
    VideoClip degraded = degrade(clean, cfg);
    data.push_back({std::move(degraded), std::move(clean)});
  }
  return data;
}

std::vector<TrendVariant> standard_variants(double lambda_temporal) {
  return {
      {"no_temporal", TemporalLossKind::kNone, 0.0, false},
      {"flow", TemporalLossKind::kFlow, lambda_temporal, false},
      {"relation_basic", TemporalLossKind::kRelationBasic, lambda_temporal, false},
      {"relation_multiscale", TemporalLossKind::kRelationMultiscale, lambda_temporal, false},
      {"single_frame", TemporalLossKind::kNone, 0.0, true},
  };
}

std::vector<TrendOutcome> run_trend(const std::vector<TrainingPair>& train, const std::vector<TrainingPair>& test,
                                    const TrainConfig& base, const std::vector<TrendVariant>& variants) {
  using Clock = std::chrono::steady_clock;
  const auto since = [](Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); };
  std::vector<ClipFlows> test_flows;
  for (const TrainingPair& p : test) test_flows.push_back(estimate_clip_flows(p.clean, base.flow_block_match, base.occlusion));
  const FlowSource flows = [&test_flows](std::size_t i, const VideoClip&) { return test_flows.at(i); };
  const int start = base.resolved_temporal_start();

  // Before `start` every variant of one input mode trains on the same frame loss with the same
  // seeds, so that prefix runs once and each variant resumes from its checkpoint.
  struct Prefix {
    std::vector<TensorBlock> state;
    double seconds = 0.0;
  };
  std::map<bool, Prefix> prefixes;
  const auto prefix_for = [&](bool single_frame) -> const Prefix& {
    auto it = prefixes.find(single_frame);
    if (it != prefixes.end()) return it->second;
    const auto t0 = Clock::now();
    TrainConfig cfg = base;
    cfg.temporal_start_epoch = start;
    cfg.objective.temporal_loss_kind = TemporalLossKind::kNone;
    cfg.objective.lambda_temporal = 0.0;
    cfg.single_frame = single_frame;
    Trainer trainer(train, cfg);
    while (trainer.epoch() < start) trainer.run_epoch();
    return prefixes[single_frame] = {trainer.checkpoint_blocks(), since(t0)};
  };

  std::vector<TrendOutcome> outcomes;
  for (const TrendVariant& v : variants) {
    TrainConfig cfg = base;
    cfg.temporal_start_epoch = start;
    cfg.objective.temporal_loss_kind = v.kind;
    cfg.objective.lambda_temporal = v.lambda_temporal;
    cfg.single_frame = v.single_frame;
    const Prefix& prefix = prefix_for(v.single_frame);
    const auto t0 = Clock::now();
    Trainer trainer(train, cfg, prefix.state);
    trainer.run_to_end();
    const EvaluationBundle eval = evaluate(trainer.model(), test, flows, v.single_frame);
    TrendOutcome o;
    o.variant = v;
    o.psnr = eval.mean_psnr;
    o.ssim = eval.mean_ssim;
    o.warping = eval.mean_warping;
    o.seconds = prefix.seconds + since(t0);
    o.log = trainer.log();
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

}  // namespace vdm
