#pragma once

#include <filesystem>
#include <string>

#include "vdm/tensor.hpp"

namespace vdm {

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA or palette). Alpha is dropped;
/// values are divided by the bit-depth maximum.
/// Errors: kFileNotFound, kUnsupportedBitDepth, kCorruptStream.
Frame load_png(const std::filesystem::path& path);

/// Writes channels 1 -> gray, 3 -> RGB. Values are clamped to [0,1] and rounded.
/// Errors: kIoError when the path cannot be written.
void save_png(const Frame& frame, const std::filesystem::path& path, int bit_depth = 8);

/// "frame_00042.png"
std::string frame_filename(std::size_t index);

/// Loads frame_00000.png, frame_00001.png, ... in order.
VideoClip load_clip_dir(const std::filesystem::path& dir);
void save_clip_dir(const VideoClip& clip, const std::filesystem::path& dir, int bit_depth = 8);

}  // namespace vdm
