#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "eir/trainer.hpp"

namespace eir {

/// Checkpoint file: magic "EIRC", version u16, then length-prefixed tagged
/// sections. Text sections carry canonical JSON; array sections carry
/// little-endian f32 payloads with u64 shape headers.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_json;  // full run config echo (canonical text)
  EncoderSpec spec;
  TrainState state;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& file, const std::string& config_json,
                     const TrainConfig& config, const TrainState& state);

Checkpoint load_checkpoint(const std::filesystem::path& file);

/// FNV-1a of the file bytes, as fixed-width hex.
std::string file_hash_hex(const std::filesystem::path& file);

}  // namespace eir
