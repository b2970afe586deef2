// Checkpoint container: magic + version header, a JSON config snapshot, a
// tensor manifest with per-tensor checksums, and a little-endian f32 payload.
#pragma once

#include <string>

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStoreT<float>& params,
                     const ModelConfig& cfg);

// Returns the stored config. Every manifest entry must match an existing
// parameter name and shape exactly; checksums guard the payload.
ModelConfig load_checkpoint(const std::string& path, ParamStoreT<float>& params);

// Reads just the config snapshot (used to size the model before loading).
ModelConfig peek_checkpoint_config(const std::string& path);

}  // namespace tauflow
