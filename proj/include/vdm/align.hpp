#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vdm/tensor.hpp"

namespace vdm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct KeypointMatch {
  Point2 src;
  Point2 dst;
  double score = 0.0;
};

/// 3x3 projective map with the bottom-right entry fixed to 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Rescales so m(2,2) == 1; throws kDegenerate when that entry is (near) zero.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Point2 apply(const Point2& p) const;
  bool invertible() const;
  Homography inverse() const;

 private:
  Eigen::Matrix3d m_;
};

struct RansacConfig {
  int iterations = 2000;
  double inlier_threshold = 3.0;  // px
  int min_inliers = 12;
  std::uint64_t seed = 1;
};

struct RansacResult {
  Homography h;
  std::vector<std::size_t> inliers;
  double mean_inlier_error = 0.0;  // px, of the refitted model
};

struct FlagRange {
  std::size_t start = 0;  // first content frame
  std::size_t end = 0;    // last content frame (inclusive)
};

/// Leading and trailing runs of frames whose mean intensity is >= white_threshold, each at
/// least run_length long. Throws kNotFound if either run is missing or nothing lies between.
FlagRange detect_flag_frames(const VideoClip& clip, double white_threshold = 0.9, int run_length = 2);

/// Keeps index ratio * g + (ratio - 1) / 2 of every group g of `ratio` frames.
std::vector<std::size_t> intermediate_indices(std::size_t frame_count, int ratio);
VideoClip sample_intermediate(const VideoClip& clip, int ratio);

struct MatchParams {
  double corner_contrast = 0.03;  // intensity difference for the segment test
  int arc_length = 9;
  int window = 15;                // correlation window (odd)
  int max_corners = 600;
  double min_correlation = 0.6;
};

/// Segment-test corners (>= arc_length contiguous pixels of the radius-3 circle all brighter
/// or all darker by corner_contrast), normalized cross-correlation on window x window patches,
/// mutual-best filtering, then translational Lucas-Kanade refinement of each destination point
/// to sub-pixel precision. Sorted by score, descending; at most max_matches.
/// Throws kDegenerate when fewer than 4 mutual matches survive.
std::vector<KeypointMatch> detect_and_match(const Frame& src, const Frame& dst, std::size_t max_matches,
                                            const MatchParams& params = {});

/// Segment-test corners of a grayscale frame, strongest first.
std::vector<Point2> detect_corners(const Frame& gray, const MatchParams& params = {});

/// Normalized DLT (Hartley normalisation, smallest right singular vector).
/// Throws kInvalidArgument for < 4 matches and kDegenerate for rank-deficient configurations.
Homography homography_dlt(std::span<const KeypointMatch> matches);

double reprojection_error(const Homography& h, const KeypointMatch& m);

/// Seeded, fixed-iteration RANSAC over 4-point DLT models with a final DLT refit on the inliers.
RansacResult ransac_homography(std::span<const KeypointMatch> matches, const RansacConfig& cfg = {});

/// out(x, y) = bilinear sample of src at h^-1 (x, y, 1), border clamped.
Frame warp_homography(const Frame& src, const Homography& h, int out_height, int out_width);

/// "sx sy dx dy score" per line.
std::vector<KeypointMatch> read_match_file(const std::filesystem::path& path);
void write_match_file(std::span<const KeypointMatch> matches, const std::filesystem::path& path);

struct AlignConfig {
  double white_threshold = 0.9;
  int run_length = 2;
  int ratio = 3;
  std::size_t max_matches = 500;
  MatchParams match{};
  RansacConfig ransac{};
};

struct PairAlignment {
  Homography source_to_captured;
  std::size_t inlier_count = 0;
  double mean_reprojection_error = 0.0;
  Frame aligned;  // captured frame resampled into source coordinates
};

/// Registers one captured frame onto its source frame. `extra_matches` (e.g. imported from a
/// match file) are pooled with the detected ones.
PairAlignment align_pair(const Frame& source, const Frame& captured, const AlignConfig& cfg,
                         std::span<const KeypointMatch> extra_matches = {});

struct ClipAlignment {
  FlagRange flags;
  std::vector<std::size_t> captured_indices;  // indices into the untrimmed captured clip
  std::vector<PairAlignment> pairs;
};

/// Trims flag frames, samples the intermediate frame of every group and aligns each sample to
/// the matching source frame. The sampled count must equal the source length.
ClipAlignment align_clip(const VideoClip& captured, const VideoClip& source, const AlignConfig& cfg);

}  // namespace vdm
