#pragma once

// Checkpoint file:
//   "GSNC" | u32 version (1) | u32 n | n bytes of JSON descriptor (sorted keys)
//   then per tensor: u16 name length | name | u8 rank | u32 dims[rank] | f64 data
// All little-endian. Tensors are the model parameters in order, followed by
// its buffers (batch-norm running statistics).

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "gesturebench/model.hpp"

namespace gesturebench {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& model);
/// Throws ParseError (with byte offset) on truncated or inconsistent input.
std::unique_ptr<Model> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace gesturebench
