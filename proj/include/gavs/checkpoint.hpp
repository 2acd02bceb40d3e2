#pragma once

#include <filesystem>
#include <memory>

#include "gavs/model.hpp"

namespace gavs {

// Binary layout, all integers and doubles little-endian:
//   "GAVSCKPT" | u32 version | u64 n + n bytes of JSON {config, audio_dim}
//   | u64 count | count x (u32 name_len, name, u32 rank, rank x u64 dims,
//   numel x f64 values)
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const GavsModel& model, const std::filesystem::path& path);
std::unique_ptr<GavsModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace gavs
