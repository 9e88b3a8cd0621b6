#include "vdm/flow.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace vdm {
namespace {

void require_flow_shape(const Frame& frame, const FlowField& flow, const char* what) {
  if (frame.height != flow.height || frame.width != flow.width) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": frame and flow sizes differ");
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

FlowField::FlowField(int h, int w, double dx_value, double dy_value) : height(h), width(w) {
  if (h < 0 || w < 0) throw Error(ErrorCode::kInvalidArgument, "negative flow dimension");
  vectors.resize(2 * static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < vectors.size(); i += 2) {
    vectors[i] = dx_value;
    vectors[i + 1] = dy_value;
  }
}

std::size_t OcclusionMask::count() const {
  std::size_t n = 0;
  for (auto v : visible) n += v ? 1 : 0;
  return n;
}

Frame warp(const Frame& source, const FlowField& flow) {
  require_flow_shape(source, flow, "warp");
  Frame out(source.height, source.width, source.channels);
  const int ch = source.channels;
  for (int y = 0; y < source.height; ++y) {
    for (int x = 0; x < source.width; ++x) {
      const BilinearTaps taps =
          bilinear_taps(source.height, source.width, x + flow.dx(y, x), y + flow.dy(y, x));
      for (int c = 0; c < ch; ++c) {
        double v = 0.0;
        for (int t = 0; t < 4; ++t) v += taps.weight[t] * source.data[taps.pixel[t] * ch + c];
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

Frame warp_adjoint(const Frame& grad, const FlowField& flow) {
  require_flow_shape(grad, flow, "warp_adjoint");
  Frame out(grad.height, grad.width, grad.channels);
  const int ch = grad.channels;
  for (int y = 0; y < grad.height; ++y) {
    for (int x = 0; x < grad.width; ++x) {
      const BilinearTaps taps = bilinear_taps(grad.height, grad.width, x + flow.dx(y, x), y + flow.dy(y, x));
      for (int c = 0; c < ch; ++c) {
        const double g = grad.at(y, x, c);
        for (int t = 0; t < 4; ++t) out.data[taps.pixel[t] * ch + c] += taps.weight[t] * g;
      }
    }
  }
  return out;
}

OcclusionMask occlusion_mask(const FlowField& flow_fwd, const FlowField& flow_bwd, double alpha, double beta) {
  if (flow_fwd.height != flow_bwd.height || flow_fwd.width != flow_bwd.width) {
    throw Error(ErrorCode::kShapeMismatch, "occlusion_mask: forward and backward flows differ in size");
  }
  if (alpha < 0.0 || beta < 0.0) throw Error(ErrorCode::kInvalidArgument, "alpha and beta must be >= 0");
  const int h = flow_fwd.height;
  const int w = flow_fwd.width;
  OcclusionMask mask(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = flow_fwd.dx(y, x);
      const double fy = flow_fwd.dy(y, x);
      const BilinearTaps taps = bilinear_taps(h, w, x + fx, y + fy);
      double bx = 0.0, by = 0.0;
      for (int t = 0; t < 4; ++t) {
        bx += taps.weight[t] * flow_bwd.vectors[2 * taps.pixel[t]];
        by += taps.weight[t] * flow_bwd.vectors[2 * taps.pixel[t] + 1];
      }
      const double sx = fx + bx;
      const double sy = fy + by;
      const double lhs = sx * sx + sy * sy;
      const double rhs = alpha * (fx * fx + fy * fy + bx * bx + by * by) + beta;
      mask.visible[static_cast<std::size_t>(y) * w + x] = lhs <= rhs ? 1 : 0;
    }
  }
  return mask;
}

LossReport flow_consistency_loss(const Frame& out_t, const Frame& out_t1, const FlowField& flow_t1_to_t,
                                 const OcclusionMask& mask) {
  require_same_shape(out_t, out_t1, "flow loss frames");
  require_flow_shape(out_t, flow_t1_to_t, "flow loss");
  if (mask.height != out_t.height || mask.width != out_t.width) {
    throw Error(ErrorCode::kShapeMismatch, "flow loss: mask size differs from frames");
  }
  const int ch = out_t.channels;
  const Frame warped = warp(out_t1, flow_t1_to_t);
  const double denom = std::max(1.0, static_cast<double>(mask.count()) * ch);

  LossReport report;
  report.grad_out_t = Frame(out_t.height, out_t.width, ch);
  Frame residual_grad(out_t.height, out_t.width, ch);
  double sum = 0.0;
  for (std::size_t p = 0; p < out_t.pixel_count(); ++p) {
    if (!mask.visible[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      const double r = warped.data[i] - out_t.data[i];
      sum += std::abs(r);
      const double g = sign(r) / denom;
      residual_grad.data[i] = g;
      report.grad_out_t.data[i] = -g;
    }
  }
  report.value = sum / denom;
  report.grad_out_t1 = warp_adjoint(residual_grad, flow_t1_to_t);
  return report;
}

FlowField block_matching_flow(const Frame& target, const Frame& source, int block, int search_radius) {
  require_same_shape(target, source, "block matching");
  if (block < 1 || block % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "block size must be odd");
  if (search_radius < 1) throw Error(ErrorCode::kInvalidArgument, "search radius must be >= 1");
  const int h = target.height;
  const int w = target.width;
  const int ch = target.channels;
  const int half = block / 2;
  FlowField flow(h, w);
  const auto clamp_at = [&](const Frame& f, int y, int x, int c) {
    return f.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1), c);
  };

  for (int by = 0; by < h; by += block) {
    for (int bx = 0; bx < w; bx += block) {
      const int cy = std::min(by + half, h - 1);
      const int cx = std::min(bx + half, w - 1);
      double best_sad = std::numeric_limits<double>::infinity();
      int best_dx = 0, best_dy = 0;
      for (int dy = -search_radius; dy <= search_radius; ++dy) {
        for (int dx = -search_radius; dx <= search_radius; ++dx) {
          double sad = 0.0;
          for (int oy = -half; oy <= half; ++oy) {
            for (int ox = -half; ox <= half; ++ox) {
              for (int c = 0; c < ch; ++c) {
                sad += std::abs(clamp_at(target, cy + oy, cx + ox, c) -
                                clamp_at(source, cy + oy + dy, cx + ox + dx, c));
              }
            }
          }
          // Loop order is (dy, dx) ascending, so equal-cost, equal-length candidates keep
          // the lexicographically smallest one automatically.
          const int len = dx * dx + dy * dy;
          const int best_len = best_dx * best_dx + best_dy * best_dy;
          if (sad < best_sad || (sad == best_sad && len < best_len)) {
            best_sad = sad;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      for (int y = by; y < std::min(by + block, h); ++y) {
        for (int x = bx; x < std::min(bx + block, w); ++x) {
          flow.dx(y, x) = best_dx;
          flow.dy(y, x) = best_dy;
        }
      }
    }
  }
  return flow;
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open flow file " + path.string());
  std::array<unsigned char, 12> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  if (in.gcount() != 12 || std::memcmp(head.data(), "PIEH", 4) != 0) {
    throw Error(ErrorCode::kCorruptStream, "bad .flo header in " + path.string());
  }
  const std::uint32_t w = get_u32(head.data() + 4);
  const std::uint32_t h = get_u32(head.data() + 8);
  if (w > (1u << 16) || h > (1u << 16)) {
    throw Error(ErrorCode::kCorruptStream, "implausible .flo dimensions in " + path.string());
  }
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  std::vector<unsigned char> raw(flow.vectors.size() * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::kCorruptStream, "truncated .flo payload in " + path.string());
  }
  for (std::size_t i = 0; i < flow.vectors.size(); ++i) {
    flow.vectors[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
  }
  return flow;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write flow file " + path.string());
  out.write("PIEH", 4);
  put_u32(out, static_cast<std::uint32_t>(flow.width));
  put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (double v : flow.vectors) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace vdm
