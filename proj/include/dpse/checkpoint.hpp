#pragma once

#include <filesystem>
#include <iosfwd>

#include "dpse/shadow.hpp"

namespace dpse {

inline constexpr std::uint32_t kCheckpointVersion = 2;

/// Checkpoint layout (little endian):
///   "DPSECKP\0", u32 version, u32 strategy kind, u32 head (1 = pointwise),
///   u32 tensor count,
///   per tensor u32 rows + u32 cols, dim x f64 lower bounds, dim x f64 upper
///   bounds, f64 tau_scale, u64 tasks M, u64 records N, u64 seed,
///   u32 trainer-name length + bytes, then every tensor's values row-major.
void write_checkpoint(std::ostream& out, const ShadowModel& model);
ShadowModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ShadowModel& model);
ShadowModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dpse
