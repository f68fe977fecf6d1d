#pragma once

// Binary checkpoint: magic, format version, model config, vocabulary, then
// named parameter entries (shape, dtype tag, little-endian f64 values) and a
// trailing FNV-1a checksum over everything before it.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "lookahead/engine.hpp"

namespace lookahead {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kCorrupt, kVersion, kShape };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string serialize_checkpoint(const Agent& agent);
Agent parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Agent& agent, const std::filesystem::path& path);
Agent load_checkpoint(const std::filesystem::path& path);
/// Rejects checkpoints whose config differs from `expected`.
Agent load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace lookahead
