// Command-line front end: synthetic data, losses, metrics, flow, alignment, training and
// evaluation. Numeric settings come from the run config; flags only name files.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vdm/align.hpp"
#include "vdm/config.hpp"
#include "vdm/flow.hpp"
#include "vdm/image_io.hpp"
#include "vdm/metrics.hpp"
#include "vdm/relation_loss.hpp"
#include "vdm/synth.hpp"
#include "vdm/toy_net.hpp"

namespace fs = std::filesystem;
using namespace vdm;

namespace {

constexpr const char* kResolvedConfig = "resolved_config.txt";

std::string indexed(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%05zu%s", prefix, i, suffix);
  return buf;
}

std::string clip_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%03zu", i);
  return buf;
}

RunConfig config_from(const std::string& path) { return path.empty() ? resolve(RunConfig{}) : load_run_config(path); }

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  save_run_config(cfg, dir / kResolvedConfig);
}

std::pair<VideoClip, VideoClip> load_pair_of_clips(const fs::path& pred_dir, const fs::path& gt_dir) {
  VideoClip pred = load_clip_dir(pred_dir);
  VideoClip gt = load_clip_dir(gt_dir);
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::kShapeMismatch, "clips differ in length: " + std::to_string(pred.size()) + " vs " +
                                               std::to_string(gt.size()));
  }
  require_same_shape(pred[0], gt[0], "prediction and ground truth");
  return {std::move(pred), std::move(gt)};
}

/// flow_XXXXX.flo (frame i+1 -> i) for every pair; flow_fwd_XXXXX.flo, when present, adds the
/// forward-backward occlusion test, otherwise every pixel is visible.
ClipFlows read_flow_dir(const fs::path& dir, std::size_t pairs, const OcclusionParams& occ) {
  ClipFlows out;
  for (std::size_t i = 0; i < pairs; ++i) {
    FlowField bwd = read_flo(dir / indexed("flow_", i, ".flo"));
    const fs::path fwd_path = dir / indexed("flow_fwd_", i, ".flo");
    OcclusionMask mask = fs::exists(fwd_path) ? occlusion_mask(bwd, read_flo(fwd_path), occ)
                                              : OcclusionMask(bwd.height, bwd.width);
    out.flows.push_back(std::move(bwd));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

/// A dataset root holds clip_*/{clean,degraded}; a single clip directory holds clean/ and
/// degraded/ itself.
std::vector<TrainingPair> load_dataset(const fs::path& root) {
  const auto load_one = [](const fs::path& d) {
    TrainingPair p{load_clip_dir(d / "degraded"), load_clip_dir(d / "clean")};
    if (p.degraded.size() != p.clean.size()) {
      throw Error(ErrorCode::kShapeMismatch, "clean and degraded clips differ in length in " + d.string());
    }
    return p;
  };
  if (fs::is_directory(root / "clean")) return {load_one(root)};
  if (!fs::is_directory(root)) throw Error(ErrorCode::kFileNotFound, "dataset directory not found: " + root.string());
  std::vector<fs::path> clips;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::is_directory(e.path() / "clean")) clips.push_back(e.path());
  }
  std::sort(clips.begin(), clips.end());
  if (clips.empty()) throw Error(ErrorCode::kNotFound, "no clip_*/clean directories under " + root.string());
  std::vector<TrainingPair> data;
  for (const fs::path& c : clips) data.push_back(load_one(c));
  return data;
}

std::vector<TrainingPair> load_datasets(const std::vector<std::string>& roots) {
  std::vector<TrainingPair> all;
  for (const std::string& r : roots) {
    for (auto& p : load_dataset(r)) all.push_back(std::move(p));
  }
  return all;
}

void write_report(const EvaluationBundle& e, double lambda_temporal, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "lambda_temporal = " << lambda_temporal << "\n";
  out << "clips = " << e.clips.size() << "\n";
  out << "psnr_mean = " << e.mean_psnr << "\n";
  out << "ssim_mean = " << e.mean_ssim << "\n";
  out << "warping_error_mean = " << e.mean_warping << "\n";
}

void write_bundle(const EvaluationBundle& e, const fs::path& dir) {
  for (std::size_t i = 0; i < e.clips.size(); ++i) {
    const fs::path clip_dir = dir / clip_dir_name(i);
    fs::create_directories(clip_dir);
    write_frame_metrics_csv(e.clips[i].psnr, e.clips[i].ssim, clip_dir / "frame_metrics.csv");
    write_warping_csv(e.clips[i].warping, clip_dir / "warping.csv");
  }
}

// ---------------------------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
};

void cmd_synth(const SynthArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const fs::path out = a.out;
  fs::create_directories(out);
  std::ostringstream manifest;
  manifest << "# synthetic clips generated from the settings below\n";
  for (int i = 0; i < cfg.synth_clips; ++i) {
    SynthConfig s = cfg.synth;
    s.seed = clip_seed(cfg.seed, static_cast<std::size_t>(i));
    const VideoClip clean = generate_clean(s);
    const VideoClip degraded = degrade(clean, s);
    const fs::path dir = out / clip_dir_name(static_cast<std::size_t>(i));
    save_clip_dir(clean, dir / "clean", 16);
    save_clip_dir(degraded, dir / "degraded", 16);
    manifest << "# " << clip_dir_name(static_cast<std::size_t>(i)) << " seed " << s.seed << "\n";
  }
  manifest << serialize(cfg);
  std::ofstream(out / "manifest.txt") << manifest.str();
  echo_config(cfg, out);
  std::cout << "wrote " << cfg.synth_clips << " clip(s) of " << cfg.synth.frames << " frames to " << out.string()
            << "\n";
}

struct LossArgs {
  std::string config, pred, gt, kind, flow_dir, scale_map;
};

void cmd_loss(const LossArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const auto [pred, gt] = load_pair_of_clips(a.pred, a.gt);
  if (pred.size() < 2) throw Error(ErrorCode::kInvalidArgument, "temporal losses need at least two frames");
  const TemporalLossKind kind =
      a.kind.empty() ? cfg.training.objective.temporal_loss_kind : parse_temporal_loss_kind(a.kind);
  ObjectiveConfig objective = cfg.training.objective;
  objective.temporal_loss_kind = kind;

  std::optional<ClipFlows> flows;
  if (kind == TemporalLossKind::kFlow) {
    flows = a.flow_dir.empty() ? estimate_clip_flows(gt, cfg.block_match, cfg.occlusion)
                               : read_flow_dir(a.flow_dir, pred.size() - 1, cfg.occlusion);
  }
  if (!a.scale_map.empty()) echo_config(cfg, a.scale_map);

  std::cout << "kind " << to_string(kind) << "\n" << std::setprecision(12);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pred.size(); ++i) {
    std::optional<FlowInputs> fi;
    if (flows) fi = FlowInputs{flows->flows[i], flows->masks[i]};
    const LossReport r = temporal_loss(pred[i], pred[i + 1], gt[i], gt[i + 1], objective, fi ? &*fi : nullptr);
    std::cout << "pair " << i << " " << r.value << "\n";
    total += r.value;
    if (!a.scale_map.empty() && !r.selected_scale.empty()) {
      const std::vector<int>& sizes = objective.scales.sizes();
      Frame map(pred[i].height, pred[i].width, pred[i].channels);
      for (std::size_t k = 0; k < map.size(); ++k) {
        const auto pos = std::find(sizes.begin(), sizes.end(), r.selected_scale[k]) - sizes.begin();
        map.data[k] = sizes.size() > 1 ? static_cast<double>(pos) / static_cast<double>(sizes.size() - 1) : 0.0;
      }
      save_png(map, fs::path(a.scale_map) / indexed("scale_map_", i, ".png"));
    }
  }
  std::cout << "mean " << total / static_cast<double>(pred.size() - 1) << "\n";
}

struct MetricsArgs {
  std::string config, pred, gt, flow_dir, out;
};

void cmd_metrics(const MetricsArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const auto [pred, gt] = load_pair_of_clips(a.pred, a.gt);
  const fs::path out = a.out;
  echo_config(cfg, out);
  const MetricReport p = psnr_report(pred, gt);
  const MetricReport s = ssim_report(pred, gt);
  write_frame_metrics_csv(p, s, out / "frame_metrics.csv");
  std::cout << std::setprecision(10) << "psnr_mean " << p.mean << "\nssim_mean " << s.mean << "\n";
  if (pred.size() >= 2) {
    const ClipFlows flows = a.flow_dir.empty() ? estimate_clip_flows(gt, cfg.block_match, cfg.occlusion)
                                               : read_flow_dir(a.flow_dir, pred.size() - 1, cfg.occlusion);
    const MetricReport w = warping_report(pred, flows);
    write_warping_csv(w, out / "warping.csv");
    std::cout << "warping_error_mean " << w.mean << "\n";
  }
}

struct FlowArgs {
  std::string config, clip, out;
};

void cmd_flow(const FlowArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const VideoClip clip = load_clip_dir(a.clip);
  const fs::path out = a.out;
  echo_config(cfg, out);
  for (std::size_t i = 0; i + 1 < clip.size(); ++i) {
    const FlowField bwd = block_matching_flow(clip[i], clip[i + 1], cfg.block_match);
    const FlowField fwd = block_matching_flow(clip[i + 1], clip[i], cfg.block_match);
    write_flo(bwd, out / indexed("flow_", i, ".flo"));
    write_flo(fwd, out / indexed("flow_fwd_", i, ".flo"));
    const OcclusionMask m = occlusion_mask(bwd, fwd, cfg.occlusion);
    Frame mask(m.height, m.width, 1);
    for (std::size_t k = 0; k < m.visible.size(); ++k) mask.data[k] = m.visible[k];
    save_png(mask, out / indexed("mask_", i, ".png"));
  }
  std::cout << "wrote " << (clip.size() - 1) << " flow pair(s) to " << out.string() << "\n";
}

struct AlignArgs {
  std::string config, captured, source, out;
};

void cmd_align(const AlignArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const VideoClip captured = load_clip_dir(a.captured);
  const VideoClip source = load_clip_dir(a.source);
  const ClipAlignment result = align_clip(captured, source, cfg.alignment);
  const fs::path out = a.out;
  echo_config(cfg, out);
  VideoClip aligned;
  for (const PairAlignment& p : result.pairs) aligned.frames.push_back(p.aligned);
  save_clip_dir(aligned, out / "aligned", 16);

  std::ofstream report(out / "alignment.csv");
  report << std::setprecision(12) << "pair,captured_index,inliers,mean_reprojection_error";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) report << ",h" << r << c;
  report << "\n";
  double mean_error = 0.0;
  for (std::size_t i = 0; i < result.pairs.size(); ++i) {
    const PairAlignment& p = result.pairs[i];
    report << i << ',' << result.captured_indices[i] << ',' << p.inlier_count << ',' << p.mean_reprojection_error;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) report << ',' << p.source_to_captured(r, c);
    report << "\n";
    mean_error += p.mean_reprojection_error;
  }
  std::cout << "content frames " << result.flags.start << ".." << result.flags.end << ", aligned "
            << result.pairs.size() << " pair(s), mean reprojection error "
            << mean_error / static_cast<double>(result.pairs.size()) << " px\n";
}

struct TrainArgs {
  std::string config, out, resume;
  std::vector<std::string> data, eval_data;
};

void run_training(const RunConfig& cfg, const TrainConfig& train_cfg, const std::vector<TrainingPair>& data,
                  const std::vector<TrainingPair>& eval_data, const fs::path& out, const std::string& resume) {
  fs::create_directories(out);
  std::optional<Trainer> trainer;
  if (resume.empty()) {
    trainer.emplace(data, train_cfg);
  } else {
    trainer.emplace(data, train_cfg, read_checkpoint(resume));
  }
  while (!trainer->done()) {
    trainer->run_epoch();
    const EpochLog& e = trainer->log().back();
    std::cout << "epoch " << e.epoch + 1 << "/" << train_cfg.epochs << " frame " << e.frame_loss << " temporal "
              << e.temporal_loss << " lr " << e.learning_rate << "\n";
    if (cfg.checkpoint_every > 0 && trainer->epoch() % cfg.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.trlt", trainer->epoch());
      trainer->save_checkpoint(out / name);
    }
  }
  trainer->save_checkpoint(out / "checkpoint.trlt");
  write_training_log_csv(trainer->log(), out / "training_log.csv");
  const std::vector<TrainingPair>& scored = eval_data.empty() ? data : eval_data;
  const EvaluationBundle e = evaluate(trainer->model(), scored, block_matching_flow_source(cfg.block_match, cfg.occlusion),
                                      train_cfg.single_frame);
  write_report(e, train_cfg.objective.lambda_temporal, out / "report.txt");
  std::cout << std::setprecision(8) << "psnr " << e.mean_psnr << " ssim " << e.mean_ssim << " warping_error "
            << e.mean_warping << "\n";
}

void cmd_train(const TrainArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const std::vector<TrainingPair> data = load_datasets(a.data);
  const std::vector<TrainingPair> eval_data = a.eval_data.empty() ? std::vector<TrainingPair>{} : load_datasets(a.eval_data);
  const fs::path out = a.out;
  echo_config(cfg, out);
  if (cfg.lambda_sweep.empty()) {
    run_training(cfg, cfg.training, data, eval_data, out, a.resume);
    return;
  }
  if (!a.resume.empty()) throw Error(ErrorCode::kInvalidArgument, "--resume cannot be combined with a lambda sweep");
  std::ofstream summary(out / "sweep_summary.csv");
  summary << std::setprecision(10) << "lambda_temporal,psnr,ssim,warping_error\n";
  for (double lambda : cfg.lambda_sweep) {
    TrainConfig t = cfg.training;
    t.objective.lambda_temporal = lambda;
    std::ostringstream name;
    name << "lambda_" << lambda;
    const fs::path dir = out / name.str();
    RunConfig echoed = cfg;
    echoed.training.objective.lambda_temporal = lambda;
    echoed.lambda_sweep.clear();
    echo_config(echoed, dir);
    std::cout << "== lambda_temporal " << lambda << "\n";
    run_training(cfg, t, data, eval_data, dir, "");
    std::ifstream report(dir / "report.txt");
    std::map<std::string, std::string> values;
    for (std::string line; std::getline(report, line);) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) values[line.substr(0, eq)] = line.substr(eq + 3);
    }
    summary << lambda << ',' << values["psnr_mean"] << ',' << values["ssim_mean"] << ','
            << values["warping_error_mean"] << "\n";
  }
}

struct EvalArgs {
  std::string config, checkpoint, out;
  std::vector<std::string> data;
};

void cmd_eval(const EvalArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const std::vector<TrainingPair> data = load_datasets(a.data);
  const ToyModel model = load_model(a.checkpoint);
  const fs::path out = a.out;
  echo_config(cfg, out);
  const EvaluationBundle e = evaluate(model, data, block_matching_flow_source(cfg.block_match, cfg.occlusion),
                                     cfg.training.single_frame, out / "restored");
  write_bundle(e, out);
  write_report(e, cfg.training.objective.lambda_temporal, out / "report.txt");
  std::cout << std::setprecision(8) << "psnr " << e.mean_psnr << " ssim " << e.mean_ssim << " warping_error "
            << e.mean_warping << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video demoireing toolkit: temporal-consistency losses, metrics, alignment and a toy model"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate seeded synthetic clean/degraded clip pairs");
  s->add_option("--config", synth.config, "Run config file")->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output directory")->required();

  LossArgs loss;
  auto* l = app.add_subcommand("loss", "Temporal loss between a predicted and a ground-truth clip");
  l->add_option("--config", loss.config, "Run config file")->check(CLI::ExistingFile);
  l->add_option("--pred", loss.pred, "Predicted frame directory")->required();
  l->add_option("--gt", loss.gt, "Ground-truth frame directory")->required();
  l->add_option("--kind", loss.kind, "none | flow | relation_basic | relation_multiscale (default: config)");
  l->add_option("--flow-dir", loss.flow_dir, "Directory of .flo files for the flow loss (default: block matching)");
  l->add_option("--scale-map", loss.scale_map, "Write the selected region size per pixel as PNGs here");

  MetricsArgs metrics;
  auto* m = app.add_subcommand("metrics", "PSNR, SSIM and warping error of a predicted clip");
  m->add_option("--config", metrics.config, "Run config file")->check(CLI::ExistingFile);
  m->add_option("--pred", metrics.pred, "Predicted frame directory")->required();
  m->add_option("--gt", metrics.gt, "Ground-truth frame directory")->required();
  m->add_option("--flow-dir", metrics.flow_dir, "Directory of .flo files (default: block matching on ground truth)");
  m->add_option("--out", metrics.out, "Output directory for the CSV reports")->required();

  FlowArgs flow;
  auto* f = app.add_subcommand("flow", "Block-matching flow between consecutive frames, written as .flo");
  f->add_option("--config", flow.config, "Run config file")->check(CLI::ExistingFile);
  f->add_option("--clip", flow.clip, "Frame directory")->required();
  f->add_option("--out", flow.out, "Output directory")->required();

  AlignArgs align;
  auto* al = app.add_subcommand("align", "Trim flag frames, sample and register captured frames to the source");
  al->add_option("--config", align.config, "Run config file")->check(CLI::ExistingFile);
  al->add_option("--captured", align.captured, "Captured frame directory")->required();
  al->add_option("--source", align.source, "Source frame directory")->required();
  al->add_option("--out", align.out, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the toy restoration model");
  t->add_option("--config", train.config, "Run config file")->check(CLI::ExistingFile);
  t->add_option("--data", train.data, "Training dataset directory (repeatable)")->required();
  t->add_option("--eval-data", train.eval_data, "Held-out dataset directory for the report (repeatable)");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--resume", train.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Restore and score clips with a trained model");
  e->add_option("--config", eval.config, "Run config file")->check(CLI::ExistingFile);
  e->add_option("--data", eval.data, "Dataset directory (repeatable)")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Model or training checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--out", eval.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) cmd_synth(synth);
    if (*l) cmd_loss(loss);
    if (*m) cmd_metrics(metrics);
    if (*f) cmd_flow(flow);
    if (*al) cmd_align(align);
    if (*t) cmd_train(train);
    if (*e) cmd_eval(eval);
  } catch (const Error& err) {
    std::cerr << "error (" << to_string(err.code()) << "): " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
