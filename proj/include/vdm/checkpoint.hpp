#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vdm {

/// One named array in a checkpoint file.
struct TensorBlock {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (all little endian): "TRLT", u32 version, u32 block count, then per block
/// u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[prod(dims)].
void write_checkpoint(const std::vector<TensorBlock>& blocks, const std::filesystem::path& path);
std::vector<TensorBlock> read_checkpoint(const std::filesystem::path& path);

const TensorBlock& find_block(const std::vector<TensorBlock>& blocks, const std::string& name);
const TensorBlock* find_block_or_null(const std::vector<TensorBlock>& blocks, const std::string& name);

}  // namespace vdm
