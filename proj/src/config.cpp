#include "vdm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vdm/rng.hpp"

namespace vdm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) throw std::invalid_argument("not a number: '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(parse_number<double>(part));
  return out;
}

std::string format_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T, typename Access>
Field number_field(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) {
            const T& v = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(v);
            } else {
              return std::to_string(v);
            }
          },
          [access](RunConfig& c, const std::string& text) { access(c) = parse_number<T>(text); }};
}

#define VDM_FIELD(T, section, key, expr) number_field<T>(section, key, [](RunConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(VDM_FIELD(std::uint64_t, "", "seed", c.seed));

    f.push_back(VDM_FIELD(int, "synth", "clips", c.synth_clips));
    f.push_back(VDM_FIELD(int, "synth", "frames", c.synth.frames));
    f.push_back(VDM_FIELD(int, "synth", "height", c.synth.height));
    f.push_back(VDM_FIELD(int, "synth", "width", c.synth.width));
    f.push_back(VDM_FIELD(int, "synth", "channels", c.synth.channels));
    f.push_back(VDM_FIELD(double, "synth", "motion_x", c.synth.motion_x));
    f.push_back(VDM_FIELD(double, "synth", "motion_y", c.synth.motion_y));
    f.push_back({"synth", "moire_frequencies",
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.synth.moire_frequencies.size(); ++i) {
                     const Grating& g = c.synth.moire_frequencies[i];
                     out += (i ? ", " : "") + format_double(g.fx) + ":" + format_double(g.fy);
                   }
                   return out;
                 },
                 [](RunConfig& c, const std::string& text) {
                   std::vector<Grating> gratings;
                   if (!text.empty()) {
                     for (const auto& part : split(text, ',')) {
                       const auto xy = split(part, ':');
                       if (xy.size() != 2) throw std::invalid_argument("expected fx:fy, got '" + part + "'");
                       gratings.push_back({parse_number<double>(xy[0]), parse_number<double>(xy[1])});
                     }
                   }
                   c.synth.moire_frequencies = std::move(gratings);
                 }});
    f.push_back(VDM_FIELD(double, "synth", "moire_amplitude", c.synth.moire_amplitude));
    f.push_back(VDM_FIELD(double, "synth", "moire_jitter", c.synth.moire_jitter));
    f.push_back(VDM_FIELD(double, "synth", "moire_drift", c.synth.moire_drift));
    f.push_back(VDM_FIELD(double, "synth", "moire_channel_phase", c.synth.moire_channel_phase));
    f.push_back(VDM_FIELD(double, "synth", "flicker_amplitude", c.synth.flicker_amplitude));
    f.push_back(VDM_FIELD(double, "synth", "brightness_ramp", c.synth.brightness_ramp));

    f.push_back(VDM_FIELD(double, "objective", "lambda_perceptual", c.training.objective.lambda_perceptual));
    f.push_back(VDM_FIELD(double, "objective", "lambda_temporal", c.training.objective.lambda_temporal));
    f.push_back({"objective", "scales",
                 [](const RunConfig& c) {
                   std::string out;
                   for (int k : c.training.objective.scales.sizes()) out += (out.empty() ? "" : ", ") + std::to_string(k);
                   return out;
                 },
                 [](RunConfig& c, const std::string& text) {
                   std::vector<int> sizes;
                   for (const auto& part : split(text, ',')) sizes.push_back(parse_number<int>(part));
                   c.training.objective.scales = ScaleSet(std::move(sizes));
                 }});
    f.push_back({"objective", "temporal_loss",
                 [](const RunConfig& c) { return std::string(to_string(c.training.objective.temporal_loss_kind)); },
                 [](RunConfig& c, const std::string& text) {
                   c.training.objective.temporal_loss_kind = parse_temporal_loss_kind(text);
                 }});
    f.push_back(VDM_FIELD(int, "objective", "feature_stages", c.training.extractor.stages));
    f.push_back(VDM_FIELD(int, "objective", "feature_filters", c.training.extractor.filters));
    f.push_back(VDM_FIELD(int, "objective", "feature_kernel", c.training.extractor.kernel));

    f.push_back(VDM_FIELD(int, "training", "epochs", c.training.epochs));
    f.push_back(VDM_FIELD(int, "training", "batch_size", c.training.batch_size));
    f.push_back(VDM_FIELD(double, "training", "base_lr", c.training.base_lr));
    f.push_back(VDM_FIELD(double, "training", "min_lr", c.training.min_lr));
    f.push_back(VDM_FIELD(int, "training", "temporal_start_epoch", c.training.temporal_start_epoch));
    f.push_back(VDM_FIELD(int, "training", "crop", c.training.crop));
    f.push_back({"training", "single_frame",
                 [](const RunConfig& c) { return std::string(c.training.single_frame ? "true" : "false"); },
                 [](RunConfig& c, const std::string& text) { c.training.single_frame = parse_bool(text); }});
    f.push_back(VDM_FIELD(int, "training", "features", c.training.model.features));
    f.push_back(VDM_FIELD(int, "training", "encoder_layers", c.training.model.encoder_layers));
    f.push_back(VDM_FIELD(int, "training", "fusion_layers", c.training.model.fusion_layers));
    f.push_back(VDM_FIELD(double, "training", "adam_beta1", c.training.adam.beta1));
    f.push_back(VDM_FIELD(double, "training", "adam_beta2", c.training.adam.beta2));
    f.push_back(VDM_FIELD(double, "training", "adam_epsilon", c.training.adam.epsilon));
    f.push_back({"training", "lambda_sweep", [](const RunConfig& c) { return format_double_list(c.lambda_sweep); },
                 [](RunConfig& c, const std::string& text) { c.lambda_sweep = parse_double_list(text); }});
    f.push_back(VDM_FIELD(int, "training", "checkpoint_every", c.checkpoint_every));

    f.push_back(VDM_FIELD(double, "alignment", "white_threshold", c.alignment.white_threshold));
    f.push_back(VDM_FIELD(int, "alignment", "flag_run_length", c.alignment.run_length));
    f.push_back(VDM_FIELD(int, "alignment", "ratio", c.alignment.ratio));
    f.push_back(VDM_FIELD(std::size_t, "alignment", "max_matches", c.alignment.max_matches));
    f.push_back(VDM_FIELD(double, "alignment", "corner_contrast", c.alignment.match.corner_contrast));
    f.push_back(VDM_FIELD(int, "alignment", "arc_length", c.alignment.match.arc_length));
    f.push_back(VDM_FIELD(int, "alignment", "match_window", c.alignment.match.window));
    f.push_back(VDM_FIELD(int, "alignment", "max_corners", c.alignment.match.max_corners));
    f.push_back(VDM_FIELD(double, "alignment", "min_correlation", c.alignment.match.min_correlation));
    f.push_back(VDM_FIELD(int, "alignment", "ransac_iterations", c.alignment.ransac.iterations));
    f.push_back(VDM_FIELD(double, "alignment", "ransac_threshold", c.alignment.ransac.inlier_threshold));
    f.push_back(VDM_FIELD(int, "alignment", "ransac_min_inliers", c.alignment.ransac.min_inliers));

    f.push_back(VDM_FIELD(int, "metrics", "block_size", c.block_match.block));
    f.push_back(VDM_FIELD(int, "metrics", "search_radius", c.block_match.search_radius));
    f.push_back(VDM_FIELD(double, "metrics", "occlusion_alpha", c.occlusion.alpha));
    f.push_back(VDM_FIELD(double, "metrics", "occlusion_beta", c.occlusion.beta));
    return f;
  }();
  return table;
}

#undef VDM_FIELD

const std::vector<std::string> kSections = {"synth", "objective", "training", "alignment", "metrics"};

void validate(const RunConfig& cfg) {
  validate(cfg.synth);
  validate(cfg.training);
  if (cfg.synth_clips < 1) throw std::invalid_argument("synth clips must be >= 1");
  if (cfg.checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  for (double l : cfg.lambda_sweep) {
    if (l < 0.0) throw std::invalid_argument("lambda_sweep entries must be >= 0");
  }
  if (cfg.alignment.ratio < 1 || cfg.alignment.ratio % 2 == 0) throw std::invalid_argument("ratio must be odd");
  if (cfg.block_match.block < 1 || cfg.block_match.search_radius < 0) {
    throw std::invalid_argument("invalid block matching parameters");
  }
}

}  // namespace

std::uint64_t clip_seed(std::uint64_t master_seed, std::size_t index) {
  return counter_bits(master_seed, 0xc11, index);
}

RunConfig resolve(RunConfig cfg) {
  cfg.synth.seed = cfg.seed;
  cfg.training.seed = cfg.seed;
  cfg.training.model.seed = counter_bits(cfg.seed, 0x30de1, 0);
  cfg.training.extractor.seed = counter_bits(cfg.seed, 0xfea7, 0);
  cfg.training.flow_block_match = cfg.block_match;
  cfg.training.occlusion = cfg.occlusion;
  cfg.alignment.ransac.seed = counter_bits(cfg.seed, 0x5ac, 0);
  return cfg;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const Field& f : fields()) index[{f.section, f.key}] = &f;
  std::map<std::pair<std::string, std::string>, int> seen;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  int first_invalid_line = 0;
  const auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        fail("unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find({section, key});
    if (it == index.end()) {
      fail("unknown key '" + key + "'" + (section.empty() ? std::string(" outside any section") : " in [" + section + "]"));
    }
    if (const auto prev = seen.find({section, key}); prev != seen.end()) {
      fail("duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
    }
    seen[{section, key}] = line_no;
    try {
      it->second->set(cfg, value);
    } catch (const std::exception& e) {
      fail(key + ": " + e.what());
    }
    // Cross-field checks may fail transiently while later lines are still to come; remember
    // the line that last turned a valid config invalid.
    try {
      validate(resolve(cfg));
      first_invalid_line = 0;
    } catch (const std::exception&) {
      if (first_invalid_line == 0) first_invalid_line = line_no;
    }
  }
  try {
    validate(resolve(cfg));
  } catch (const std::exception& e) {
    line_no = first_invalid_line;
    fail(e.what());
  }
  return resolve(cfg);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << serialize(cfg);
}

}  // namespace vdm
