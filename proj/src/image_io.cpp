#include "vdm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <regex>

namespace vdm {
namespace {

namespace fs = std::filesystem;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_to_longjmp(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

Frame load_png(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, "no such file: " + path.string());
  }
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kFileNotFound, "cannot open: " + path.string());

  // Signature and IHDR are checked by hand so the bit depth can be rejected before decoding.
  std::array<unsigned char, 33> head{};
  if (std::fread(head.data(), 1, head.size(), file.get()) != head.size() ||
      png_sig_cmp(head.data(), 0, 8) != 0 || std::memcmp(head.data() + 12, "IHDR", 4) != 0) {
    throw Error(ErrorCode::kCorruptStream, "not a PNG stream: " + path.string());
  }
  const int header_depth = head[24];
  const int header_color = head[25];
  if (header_color != PNG_COLOR_TYPE_PALETTE && header_depth != 8 && header_depth != 16) {
    throw Error(ErrorCode::kUnsupportedBitDepth,
                "bit depth " + std::to_string(header_depth) + " not supported: " + path.string());
  }
  std::rewind(file.get());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_to_longjmp, png_warning_ignore);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "libpng initialization failed");
  }

  // Everything touched after setjmp lives in these pre-declared objects.
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, channels = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kCorruptStream, "corrupt PNG stream: " + path.string());
  }

  png_init_io(png, file.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  pixels.resize(row_bytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kCorruptStream, "unexpected channel count in " + path.string());
  }
  Frame frame(static_cast<int>(height), static_cast<int>(width), channels);
  if (bit_depth == 16) {
    for (std::size_t i = 0; i < frame.data.size(); ++i) {
      const unsigned v = (unsigned{pixels[2 * i]} << 8) | pixels[2 * i + 1];
      frame.data[i] = v / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < frame.data.size(); ++i) frame.data[i] = pixels[i] / 255.0;
  }
  return frame;
}

void save_png(const Frame& frame, const fs::path& path, int bit_depth) {
  if (frame.channels != 1 && frame.channels != 3) {
    throw Error(ErrorCode::kInvalidArgument, "PNG frames need 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::kUnsupportedBitDepth, "PNG output supports 8 or 16 bits");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIoError, "cannot write: " + path.string());

  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes = bit_depth / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(frame.width) * frame.channels * bytes;
  std::vector<unsigned char> pixels(row_bytes * frame.height);
  for (std::size_t i = 0; i < frame.data.size(); ++i) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(frame.data[i], 0.0, 1.0) * max_value));
    if (bytes == 2) {
      pixels[2 * i] = static_cast<unsigned char>(q >> 8);
      pixels[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    } else {
      pixels[i] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(frame.height);
  for (int y = 0; y < frame.height; ++y) rows[y] = pixels.data() + y * row_bytes;

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_to_longjmp, png_warning_ignore);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "failed writing PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height),
               bit_depth, frame.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw Error(ErrorCode::kIoError, "flush failed: " + path.string());
}

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", index);
  return buf;
}

VideoClip load_clip_dir(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::kFileNotFound, "no such directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d{5,})\.png)");
  std::map<std::size_t, fs::path> indexed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) indexed[std::stoul(m[1].str())] = entry.path();
  }
  if (indexed.empty()) throw Error(ErrorCode::kNotFound, "no frame_*.png files in " + dir.string());
  VideoClip clip;
  std::size_t expected = 0;
  for (const auto& [index, path] : indexed) {
    if (index != expected++) {
      throw Error(ErrorCode::kNotFound, "frame sequence has a gap before " + path.string());
    }
    clip.frames.push_back(load_png(path));
  }
  validate_clip(clip);
  return clip;
}

void save_clip_dir(const VideoClip& clip, const fs::path& dir, int bit_depth) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create directory " + dir.string());
  for (std::size_t i = 0; i < clip.size(); ++i) save_png(clip[i], dir / frame_filename(i), bit_depth);
}

}  // namespace vdm
