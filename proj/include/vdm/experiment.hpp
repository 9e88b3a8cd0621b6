#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdm/synth.hpp"
#include "vdm/toy_net.hpp"

namespace vdm {

/// Clips `first .. first+count-1` of a seeded synthetic benchmark; clip i uses clip_seed(seed, i).
std::vector<TrainingPair> synthetic_dataset(const SynthConfig& base, std::uint64_t seed, std::size_t first,
                                            std::size_t count);

struct TrendVariant {
  std::string name;
  TemporalLossKind kind = TemporalLossKind::kNone;
  double lambda_temporal = 0.0;
  bool single_frame = false;
};

/// No temporal term, flow loss, basic relation, multi-scale relation, single-frame input.
std::vector<TrendVariant> standard_variants(double lambda_temporal = 50.0);

struct TrendOutcome {
  TrendVariant variant;
  double psnr = 0.0;
  double ssim = 0.0;
  double warping = 0.0;
  double seconds = 0.0;  // includes the shared pre-temporal epochs
  std::vector<EpochLog> log;
};

/// Trains one model per variant on `train` with `base` (kind, weight and input mode replaced)
/// and scores it on `test` with flows block-matched on the clean test clips. Epochs before the
/// temporal start are trained once per input mode and shared; each result is bit-identical to
/// a separate `train` run.
std::vector<TrendOutcome> run_trend(const std::vector<TrainingPair>& train, const std::vector<TrainingPair>& test,
                                    const TrainConfig& base, const std::vector<TrendVariant>& variants);

}  // namespace vdm
