#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dpse/sim.hpp"

namespace dpse {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Binary task dataset:
///   header  "DPSETDS\0", u32 version, u32 strategy kind (0 spiral, 1 probe),
///           u64 record count, u32 param dim, mixture block
///   records fixed width, little endian:
///           dim x f64 params, 2 x f64 hole, f64 duration, f64 contact parameter
///           (NaN if none), i32 success index (0 if none), u8 success,
///           16 x u8 probe flags (bit0 probed, bit1 hit)
/// The mixture block is u32 count then (w, mx, my, c00, c01, c10, c11) as f64.
void write_task_dataset(std::ostream& out, const TaskDataset& ds);
TaskDataset read_task_dataset(std::istream& in);
void save_task_dataset(const std::filesystem::path& path, const TaskDataset& ds);
TaskDataset load_task_dataset(const std::filesystem::path& path);

/// Source dataset: "DPSESRC\0", u32 version, u64 task count, then task datasets.
void save_source_dataset(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks);
std::vector<TaskDataset> load_source_dataset(const std::filesystem::path& path);

/// Lossless CSV export (17 significant digits); one row per record.
void write_task_dataset_csv(std::ostream& out, const TaskDataset& ds);

}  // namespace dpse
