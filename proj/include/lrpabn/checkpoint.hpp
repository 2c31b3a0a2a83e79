#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lrpabn/params.hpp"

namespace lrpabn {

/// Checkpoint layout (all integers little-endian):
///   "LRPC" | u8 version = 1 | u32 parameter count
///   per parameter: u16 name length | name bytes | u8 rank | rank × u32 dims |
///                  float32 values, row-major
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
/// FormatError (with the byte offset) on bad magic, version, or truncation.
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// Rounds every value through float32, the checkpoint's storage precision.
void round_to_checkpoint_precision(ModelParams& params);

}  // namespace lrpabn
