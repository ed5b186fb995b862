#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "wsdec/training.hpp"

namespace wsdec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: "WSDCKPT\0", u32 version (1), u64 header length, JSON header, then
// float32 little-endian payloads: every parameter in declared order followed
// by every momentum buffer in the same order. The header names each tensor
// with its shape and records the model config, stage, step, epoch, batch,
// seed and the run-config hash.
//
// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     std::uint64_t config_hash);

struct LoadedCheckpoint {
  TrainState state;
  std::uint64_t config_hash = 0;
};

// When `expected` is given, its shape-relevant fields must match the stored
// model config; a mismatch throws CheckpointError naming both.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace wsdec
