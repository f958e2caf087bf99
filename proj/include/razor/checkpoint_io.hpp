#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "razor/model.hpp"

namespace razor {

// Binary checkpoint format:
//   magic "RZCK", format version u32,
//   config block: u32 length + canonical key=value text (ModelConfig + meta),
//   tensor table: count u32; per tensor: name length u16 + UTF-8 name,
//     rank u8, dims u32 each, payload little-endian f64,
//   trailing CRC32 of all preceding bytes.
inline constexpr uint32_t kCheckpointFormatVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_block_text(const ModelConfig& cfg, const CheckpointMeta& meta);

}  // namespace razor
