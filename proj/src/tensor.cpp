#include "vdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdm {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kFileNotFound: return "file not found";
    case ErrorCode::kUnsupportedBitDepth: return "unsupported bit depth";
    case ErrorCode::kCorruptStream: return "corrupt stream";
    case ErrorCode::kIoError: return "i/o error";
    case ErrorCode::kDegenerate: return "degenerate input";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kStaleCache: return "stale cache";
  }
  return "unknown";
}

Frame::Frame(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
  if (h < 0 || w < 0 || c < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative frame dimension");
  }
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

double Frame::mean() const {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (double v : data) sum += v;
  return sum / static_cast<double>(data.size());
}

void require_same_shape(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": " + std::to_string(a.height) + "x" +
                    std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                    std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                    std::to_string(b.channels));
  }
}

void validate_clip(const VideoClip& clip) {
  if (clip.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "empty clip");
  for (const Frame& f : clip.frames) require_same_shape(clip.frames.front(), f, "clip frames");
}

BilinearTaps bilinear_taps(int height, int width, double x, double y) {
  const double xc = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = xc - x0;
  const double fy = yc - y0;

  BilinearTaps taps;
  taps.pixel = {static_cast<std::size_t>(y0) * width + x0, static_cast<std::size_t>(y0) * width + x1,
                static_cast<std::size_t>(y1) * width + x0, static_cast<std::size_t>(y1) * width + x1};
  taps.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return taps;
}

std::vector<double> bilinear_sample(const Frame& frame, double x, double y) {
  std::vector<double> out(frame.channels, 0.0);
  if (frame.height == 0 || frame.width == 0) return out;
  const BilinearTaps taps = bilinear_taps(frame.height, frame.width, x, y);
  for (int c = 0; c < frame.channels; ++c) {
    double v = 0.0;
    for (int t = 0; t < 4; ++t) v += taps.weight[t] * frame.data[taps.pixel[t] * frame.channels + c];
    out[c] = v;
  }
  return out;
}

Frame downsample_half(const Frame& frame) {
  if (frame.height < 2 || frame.width < 2) {
    throw Error(ErrorCode::kDegenerate, "downsample_half needs height and width >= 2");
  }
  const int oh = (frame.height + 1) / 2;
  const int ow = (frame.width + 1) / 2;
  Frame out(oh, ow, frame.channels);
  for (int y = 0; y < oh; ++y) {
    const int ys = 2 * y;
    const int ye = std::min(ys + 2, frame.height);
    for (int x = 0; x < ow; ++x) {
      const int xs = 2 * x;
      const int xe = std::min(xs + 2, frame.width);
      const double inv = 1.0 / ((ye - ys) * (xe - xs));
      for (int c = 0; c < frame.channels; ++c) {
        double sum = 0.0;
        for (int yy = ys; yy < ye; ++yy)
          for (int xx = xs; xx < xe; ++xx) sum += frame.at(yy, xx, c);
        out.at(y, x, c) = sum * inv;
      }
    }
  }
  return out;
}

Frame clamp01(Frame frame) {
  for (double& v : frame.data) v = std::clamp(v, 0.0, 1.0);
  return frame;
}

Frame to_grayscale(const Frame& frame) {
  if (frame.channels == 1) return frame;
  Frame out(frame.height, frame.width, 1);
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    if (frame.channels >= 3) {
      out.data[p] = 0.299 * frame.data[p * frame.channels] +
                    0.587 * frame.data[p * frame.channels + 1] +
                    0.114 * frame.data[p * frame.channels + 2];
    } else {
      double s = 0.0;
      for (int c = 0; c < frame.channels; ++c) s += frame.data[p * frame.channels + c];
      out.data[p] = s / frame.channels;
    }
  }
  return out;
}

}  // namespace vdm
