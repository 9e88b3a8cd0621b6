#include "vdm/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "vdm/error.hpp"

namespace vdm {
namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(b, sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(ErrorCode::kCorruptStream, "truncated checkpoint " + path.string());
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::vector<TensorBlock>& blocks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write checkpoint " + path.string());
  out.write("TRLT", 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const TensorBlock& b : blocks) {
    std::uint64_t count = 1;
    for (auto d : b.shape) count *= d;
    if (count != b.values.size()) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint block '" + b.name + "' shape/value count mismatch");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) put_le<std::uint64_t>(out, d);
    for (double v : b.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing checkpoint " + path.string());
}

std::vector<TensorBlock> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "TRLT") {
    throw Error(ErrorCode::kCorruptStream, "not a checkpoint file: " + path.string());
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kCorruptStream, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in, path);
  std::vector<TensorBlock> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlock b;
    const auto name_len = get_le<std::uint32_t>(in, path);
    if (name_len > 4096) throw Error(ErrorCode::kCorruptStream, "implausible block name length");
    b.name.resize(name_len);
    in.read(b.name.data(), name_len);
    const auto rank = get_le<std::uint32_t>(in, path);
    if (rank > 8) throw Error(ErrorCode::kCorruptStream, "implausible block rank");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      b.shape.push_back(get_le<std::uint64_t>(in, path));
      n *= b.shape.back();
    }
    if (n > (std::uint64_t{1} << 32)) throw Error(ErrorCode::kCorruptStream, "implausible block size");
    b.values.resize(n);
    for (auto& v : b.values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
    blocks.push_back(std::move(b));
  }
  return blocks;
}

const TensorBlock* find_block_or_null(const std::vector<TensorBlock>& blocks, const std::string& name) {
  for (const TensorBlock& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const TensorBlock& find_block(const std::vector<TensorBlock>& blocks, const std::string& name) {
  const TensorBlock* b = find_block_or_null(blocks, name);
  if (!b) throw Error(ErrorCode::kNotFound, "checkpoint has no block '" + name + "'");
  return *b;
}

}  // namespace vdm
