#pragma once

#include <filesystem>

#include "creole/encoder.hpp"

namespace creole {

// Binary checkpoint, all integers and floats little-endian:
//   magic "CRLMCKPT" (8 bytes), u32 format version (1),
//   u32 preset-name length + bytes, u32 layers, d_model, heads, max_len,
//   u32 vocab size, u64 seed, u32 tensor count, then per tensor:
//   u32 name length + bytes, u32 rank, u32 dims[rank], f32 values (row-major).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace creole
