#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdm/align.hpp"
#include "vdm/synth.hpp"
#include "vdm/toy_net.hpp"

namespace vdm {

/// Everything a CLI run needs besides paths. One master seed feeds every random source.
///
/// Text form: `key = value` lines grouped under [synth], [objective], [training], [alignment]
/// and [metrics]; `seed` sits above the first section. `#` starts a comment. Unknown keys,
/// repeated keys and malformed values are rejected with the offending line number.
struct RunConfig {
  std::uint64_t seed = 1;

  SynthConfig synth{};
  int synth_clips = 1;

  TrainConfig training{};
  std::vector<double> lambda_sweep;  // empty = single run at objective.lambda_temporal
  int checkpoint_every = 0;          // epochs between numbered checkpoints; 0 = final only

  AlignConfig alignment{};

  BlockMatchParams block_match{};
  OcclusionParams occlusion{};
};

/// Copies the master seed and the shared flow settings into every sub-config.
RunConfig resolve(RunConfig cfg);

/// Seed of synthetic clip `index` in a multi-clip run.
std::uint64_t clip_seed(std::uint64_t master_seed, std::size_t index);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key with its resolved value; parse_run_config(serialize(c)) reproduces c exactly.
std::string serialize(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace vdm
