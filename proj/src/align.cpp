#include "vdm/align.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "vdm/rng.hpp"

namespace vdm {
namespace {

constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                        {3, 0}, {3, 1}, {2, 2}, {1, 3},
                                                        {0, 3}, {-1, 3}, {-2, 2}, {-3, 1},
                                                        {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

int longest_circular_run(const std::array<int, 16>& labels, int want) {
  int best = 0, run = 0;
  for (int i = 0; i < 32; ++i) {
    if (labels[i % 16] == want) {
      best = std::max(best, std::min(++run, 16));
    } else {
      run = 0;
    }
  }
  return best;
}

struct Patch {
  Point2 at;
  std::vector<double> values;  // zero-mean, unit-norm
};

std::vector<Patch> describe(const Frame& gray, const std::vector<Point2>& corners, int window) {
  const int half = window / 2;
  std::vector<Patch> out;
  out.reserve(corners.size());
  for (const Point2& p : corners) {
    const int cx = static_cast<int>(p.x);
    const int cy = static_cast<int>(p.y);
    Patch patch{p, std::vector<double>(static_cast<std::size_t>(window) * window)};
    double mean = 0.0;
    std::size_t k = 0;
    for (int y = -half; y <= half; ++y)
      for (int x = -half; x <= half; ++x) mean += (patch.values[k++] = gray.at(cy + y, cx + x, 0));
    mean /= static_cast<double>(patch.values.size());
    double norm = 0.0;
    for (double& v : patch.values) {
      v -= mean;
      norm += v * v;
    }
    if (norm < 1e-12) continue;
    norm = 1.0 / std::sqrt(norm);
    for (double& v : patch.values) v *= norm;
    out.push_back(std::move(patch));
  }
  return out;
}

Eigen::Matrix3d normalizing_transform(const std::vector<Point2>& pts) {
  double cx = 0.0, cy = 0.0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const Point2& p : pts) dist += std::hypot(p.x - cx, p.y - cy);
  dist /= static_cast<double>(pts.size());
  if (dist < 1e-12) throw Error(ErrorCode::kDegenerate, "homography: coincident points");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0;
  return t;
}

Point2 transform(const Eigen::Matrix3d& m, const Point2& p) {
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w, (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale) || std::abs(m(2, 2)) < 1e-12 * scale) {
    throw Error(ErrorCode::kDegenerate, "homography has a vanishing bottom-right entry");
  }
  m_ = m / m(2, 2);
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Point2 Homography::apply(const Point2& p) const { return transform(m_, p); }

bool Homography::invertible() const {
  return std::abs(m_.determinant()) > 1e-12 * std::max(1.0, m_.cwiseAbs().maxCoeff());
}

Homography Homography::inverse() const {
  if (!invertible()) throw Error(ErrorCode::kDegenerate, "homography is not invertible");
  return Homography(m_.inverse());
}

FlagRange detect_flag_frames(const VideoClip& clip, double white_threshold, int run_length) {
  if (clip.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "flag detection on an empty clip");
  if (run_length < 1) throw Error(ErrorCode::kInvalidArgument, "flag run length must be >= 1");
  const std::size_t n = clip.size();
  std::vector<bool> white(n);
  for (std::size_t i = 0; i < n; ++i) white[i] = clip[i].mean() >= white_threshold;

  std::size_t lead = 0;
  while (lead < n && white[lead]) ++lead;
  std::size_t trail = 0;
  while (trail < n && white[n - 1 - trail]) ++trail;
  if (lead == n) throw Error(ErrorCode::kNotFound, "every frame is a flag frame; no content between flags");
  if (lead < static_cast<std::size_t>(run_length)) {
    throw Error(ErrorCode::kNotFound, "no leading white flag run found");
  }
  if (trail < static_cast<std::size_t>(run_length)) {
    throw Error(ErrorCode::kNotFound, "no trailing white flag run found");
  }
  return {lead, n - 1 - trail};
}

std::vector<std::size_t> intermediate_indices(std::size_t frame_count, int ratio) {
  if (ratio < 1 || ratio % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "sampling ratio must be odd and >= 1");
  if (frame_count % static_cast<std::size_t>(ratio) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "frame count " + std::to_string(frame_count) +
                                                 " is not divisible by ratio " + std::to_string(ratio));
  }
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < frame_count / ratio; ++g) idx.push_back(g * ratio + (ratio - 1) / 2);
  return idx;
}

VideoClip sample_intermediate(const VideoClip& clip, int ratio) {
  VideoClip out;
  out.frame_rate = clip.frame_rate / ratio;
  for (std::size_t i : intermediate_indices(clip.size(), ratio)) out.frames.push_back(clip[i]);
  return out;
}

/// Translational Lucas-Kanade on mean-subtracted window x window patches: moves `at` in `dst`
/// until its neighbourhood matches the one around integer `anchor` in `src`. Returns `at`
/// unchanged when the iteration leaves the frame, drifts more than 2 px or is ill-conditioned.
Point2 refine_match(const Frame& src, Point2 anchor, const Frame& dst, Point2 at, int window) {
  const int half = window / 2;
  const std::size_t n = static_cast<std::size_t>(window) * window;
  std::vector<double> tmpl(n), sample(n), gx(n), gy(n);
  std::size_t k = 0;
  for (int y = -half; y <= half; ++y)
    for (int x = -half; x <= half; ++x) tmpl[k++] = src.at(static_cast<int>(anchor.y) + y, static_cast<int>(anchor.x) + x, 0);
  const auto centre = [](std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double& e : v) e -= m;
  };
  centre(tmpl);
  const auto value = [&](double x, double y) { return bilinear_sample(dst, x, y)[0]; };
  Point2 q = at;
  for (int iter = 0; iter < 20; ++iter) {
    if (q.x - half - 1 < 0 || q.y - half - 1 < 0 || q.x + half + 1 > dst.width - 1 || q.y + half + 1 > dst.height - 1) {
      return at;
    }
    k = 0;
    for (int y = -half; y <= half; ++y)
      for (int x = -half; x <= half; ++x, ++k) {
        sample[k] = value(q.x + x, q.y + y);
        gx[k] = 0.5 * (value(q.x + x + 1, q.y + y) - value(q.x + x - 1, q.y + y));
        gy[k] = 0.5 * (value(q.x + x, q.y + y + 1) - value(q.x + x, q.y + y - 1));
      }
    centre(sample);
    centre(gx);
    centre(gy);
    double a = 0.0, b = 0.0, c = 0.0, rx = 0.0, ry = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = tmpl[i] - sample[i];
      a += gx[i] * gx[i];
      b += gx[i] * gy[i];
      c += gy[i] * gy[i];
      rx += gx[i] * r;
      ry += gy[i] * r;
    }
    const double det = a * c - b * b;
    if (det <= 1e-12 * (a + c) * (a + c) || det <= 0.0) return at;
    const double dx = (c * rx - b * ry) / det;
    const double dy = (a * ry - b * rx) / det;
    q.x += dx;
    q.y += dy;
    if (std::hypot(q.x - at.x, q.y - at.y) > 2.0) return at;
    if (std::hypot(dx, dy) < 1e-4) break;
  }
  return q;
}

std::vector<Point2> detect_corners(const Frame& gray, const MatchParams& params) {
  if (gray.channels != 1) throw Error(ErrorCode::kInvalidArgument, "corner detection expects grayscale");
  const int margin = std::max(3, params.window / 2);
  const int h = gray.height;
  const int w = gray.width;
  Frame score(h, w, 1);
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double center = gray.at(y, x, 0);
      std::array<int, 16> labels{};
      double s = 0.0;
      for (int i = 0; i < 16; ++i) {
        const double d = gray.at(y + kCircle[i][1], x + kCircle[i][0], 0) - center;
        labels[i] = d > params.corner_contrast ? 1 : (d < -params.corner_contrast ? -1 : 0);
        s += std::max(0.0, std::abs(d) - params.corner_contrast);
      }
      if (longest_circular_run(labels, 1) >= params.arc_length ||
          longest_circular_run(labels, -1) >= params.arc_length) {
        score.at(y, x, 0) = s;
      }
    }
  }
  struct Scored {
    double s;
    int y, x;
  };
  std::vector<Scored> kept;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double s = score.at(y, x, 0);
      if (s <= 0.0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const double o = score.at(y + dy, x + dx, 0);
          // Plateaus keep the first pixel in raster order.
          if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (is_max) kept.push_back({s, y, x});
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Scored& a, const Scored& b) { return a.s > b.s; });
  if (kept.size() > static_cast<std::size_t>(params.max_corners)) kept.resize(params.max_corners);
  std::vector<Point2> out;
  out.reserve(kept.size());
  for (const Scored& k : kept) out.push_back({static_cast<double>(k.x), static_cast<double>(k.y)});
  return out;
}

std::vector<KeypointMatch> detect_and_match(const Frame& src, const Frame& dst, std::size_t max_matches,
                                            const MatchParams& params) {
  if (params.window < 3 || params.window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "correlation window must be odd and >= 3");
  }
  const Frame gs = to_grayscale(src);
  const Frame gd = to_grayscale(dst);
  const std::vector<Patch> ps = describe(gs, detect_corners(gs, params), params.window);
  const std::vector<Patch> pd = describe(gd, detect_corners(gd, params), params.window);
  if (ps.size() < 4 || pd.size() < 4) throw Error(ErrorCode::kDegenerate, "too few corners to match");

  std::vector<double> ncc(ps.size() * pd.size());
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < pd.size(); ++j)
      ncc[i * pd.size() + j] =
          std::inner_product(ps[i].values.begin(), ps[i].values.end(), pd[j].values.begin(), 0.0);

  std::vector<std::size_t> best_for_src(ps.size()), best_for_dst(pd.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::size_t b = 0;
    for (std::size_t j = 1; j < pd.size(); ++j)
      if (ncc[i * pd.size() + j] > ncc[i * pd.size() + b]) b = j;
    best_for_src[i] = b;
  }
  for (std::size_t j = 0; j < pd.size(); ++j) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < ps.size(); ++i)
      if (ncc[i * pd.size() + j] > ncc[b * pd.size() + j]) b = i;
    best_for_dst[j] = b;
  }

  std::vector<KeypointMatch> matches;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::size_t j = best_for_src[i];
    const double s = ncc[i * pd.size() + j];
    if (best_for_dst[j] == i && s >= params.min_correlation) {
      matches.push_back({ps[i].at, refine_match(gs, ps[i].at, gd, pd[j].at, params.window), std::min(1.0, s)});
    }
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const KeypointMatch& a, const KeypointMatch& b) { return a.score > b.score; });
  if (matches.size() > max_matches) matches.resize(max_matches);
  if (matches.size() < 4) {
    throw Error(ErrorCode::kDegenerate, "only " + std::to_string(matches.size()) + " mutual matches found");
  }
  return matches;
}

Homography homography_dlt(std::span<const KeypointMatch> matches) {
  if (matches.size() < 4) throw Error(ErrorCode::kInvalidArgument, "homography needs at least 4 matches");
  std::vector<Point2> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const KeypointMatch& m : matches) {
    src.push_back(m.src);
    dst.push_back(m.dst);
  }
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);

  Eigen::MatrixXd a(2 * matches.size(), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Point2 p = transform(ts, src[i]);
    const Point2 q = transform(td, dst[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x;
    a.row(r + 1) << 0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A one-dimensional null space needs eight non-vanishing singular values.
  if (sv.size() < 8 || sv(7) <= 1e-9 * sv(0)) {
    throw Error(ErrorCode::kDegenerate, "homography: degenerate point configuration");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  return Homography(full);
}

double reprojection_error(const Homography& h, const KeypointMatch& m) {
  const Point2 p = h.apply(m.src);
  const double e = std::hypot(p.x - m.dst.x, p.y - m.dst.y);
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

RansacResult ransac_homography(std::span<const KeypointMatch> matches, const RansacConfig& cfg) {
  if (matches.size() < 4) throw Error(ErrorCode::kInvalidArgument, "RANSAC needs at least 4 matches");
  if (cfg.iterations < 1 || !(cfg.inlier_threshold > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "RANSAC needs iterations >= 1 and a positive threshold");
  }
  const std::size_t n = matches.size();
  const auto score = [&](const Homography& h, std::vector<std::size_t>& inliers) {
    inliers.clear();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = reprojection_error(h, matches[i]);
      if (e <= cfg.inlier_threshold) {
        inliers.push_back(i);
        total += e;
      }
    }
    return inliers.empty() ? std::numeric_limits<double>::infinity() : total / static_cast<double>(inliers.size());
  };

  std::size_t best_count = 0;
  double best_error = std::numeric_limits<double>::infinity();
  Homography best;
  std::vector<std::size_t> candidate;
  std::array<KeypointMatch, 4> sample;
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(it));
    std::array<std::size_t, 4> pick{};
    for (int k = 0; k < 4; ++k) {
      std::size_t c;
      do {
        c = static_cast<std::size_t>(rng.below(n));
      } while (std::find(pick.begin(), pick.begin() + k, c) != pick.begin() + k);
      pick[k] = c;
      sample[k] = matches[c];
    }
    Homography model;
    try {
      model = homography_dlt(sample);
    } catch (const Error&) {
      continue;
    }
    const double err = score(model, candidate);
    if (candidate.size() > best_count || (candidate.size() == best_count && err < best_error)) {
      best_count = candidate.size();
      best_error = err;
      best = model;
    }
  }
  if (best_count < static_cast<std::size_t>(std::max(4, cfg.min_inliers))) {
    throw Error(ErrorCode::kNotFound, "RANSAC found no model with " + std::to_string(cfg.min_inliers) +
                                          " inliers (best " + std::to_string(best_count) + ")");
  }

  RansacResult result;
  std::vector<std::size_t> inliers;
  score(best, inliers);
  std::vector<KeypointMatch> subset;
  subset.reserve(inliers.size());
  for (std::size_t i : inliers) subset.push_back(matches[i]);
  result.h = best;
  try {
    const Homography refit = homography_dlt(subset);
    std::vector<std::size_t> refit_inliers;
    score(refit, refit_inliers);
    if (refit_inliers.size() >= inliers.size()) result.h = refit;
  } catch (const Error&) {
  }
  result.mean_inlier_error = score(result.h, result.inliers);
  return result;
}

Frame warp_homography(const Frame& src, const Homography& h, int out_height, int out_width) {
  if (!h.invertible()) throw Error(ErrorCode::kDegenerate, "warp_homography: matrix is not invertible");
  const Homography inv = h.inverse();
  Frame out(out_height, out_width, src.channels);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      Point2 p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) p = {0.0, 0.0};
      const BilinearTaps taps = bilinear_taps(src.height, src.width, p.x, p.y);
      for (int c = 0; c < src.channels; ++c) {
        double v = 0.0;
        for (int t = 0; t < 4; ++t) v += taps.weight[t] * src.data[taps.pixel[t] * src.channels + c];
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

std::vector<KeypointMatch> read_match_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open match file " + path.string());
  std::vector<KeypointMatch> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ss(line);
    KeypointMatch m;
    std::string extra;
    if (!(ss >> m.src.x >> m.src.y >> m.dst.x >> m.dst.y >> m.score) || (ss >> extra)) {
      throw Error(ErrorCode::kCorruptStream,
                  path.string() + ":" + std::to_string(line_no) + ": expected 'sx sy dx dy score'");
    }
    out.push_back(m);
  }
  return out;
}

void write_match_file(std::span<const KeypointMatch> matches, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write match file " + path.string());
  out.precision(17);
  for (const KeypointMatch& m : matches) {
    out << m.src.x << ' ' << m.src.y << ' ' << m.dst.x << ' ' << m.dst.y << ' ' << m.score << '\n';
  }
}

PairAlignment align_pair(const Frame& source, const Frame& captured, const AlignConfig& cfg,
                         std::span<const KeypointMatch> extra_matches) {
  std::vector<KeypointMatch> matches(extra_matches.begin(), extra_matches.end());
  try {
    const auto detected = detect_and_match(source, captured, cfg.max_matches, cfg.match);
    matches.insert(matches.end(), detected.begin(), detected.end());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerate || matches.size() < 4) throw;
  }
  const RansacResult fit = ransac_homography(matches, cfg.ransac);
  PairAlignment out;
  out.source_to_captured = fit.h;
  out.inlier_count = fit.inliers.size();
  out.mean_reprojection_error = fit.mean_inlier_error;
  out.aligned = warp_homography(captured, fit.h.inverse(), source.height, source.width);
  return out;
}

ClipAlignment align_clip(const VideoClip& captured, const VideoClip& source, const AlignConfig& cfg) {
  validate_clip(captured);
  validate_clip(source);
  ClipAlignment out;
  out.flags = detect_flag_frames(captured, cfg.white_threshold, cfg.run_length);
  const std::size_t content = out.flags.end - out.flags.start + 1;
  const std::vector<std::size_t> picks = intermediate_indices(content, cfg.ratio);
  if (picks.size() != source.size()) {
    throw Error(ErrorCode::kShapeMismatch, "captured clip yields " + std::to_string(picks.size()) +
                                               " frames after sampling, source has " +
                                               std::to_string(source.size()));
  }
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const std::size_t idx = out.flags.start + picks[i];
    out.captured_indices.push_back(idx);
    out.pairs.push_back(align_pair(source[i], captured[idx], cfg));
  }
  return out;
}

}  // namespace vdm
