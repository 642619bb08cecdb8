#pragma once

#include <cstdint>
#include <filesystem>

#include "hdccf/model.h"

namespace hdccf {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  bool modulated = true;
};

/// One JSON header line, then every table as little-endian float64 in the
/// order user_emb, item_emb, user_factor, item_factor, mod_weights, mod_bias.
void save_checkpoint(const ModelParams& params, std::uint64_t seed, bool modulated, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hdccf
