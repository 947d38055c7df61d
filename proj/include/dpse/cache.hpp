#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dpse/shadow.hpp"
#include "dpse/sim.hpp"

namespace dpse {

/// Environment variable that overrides the cache directory.
inline constexpr const char* kCacheEnv = "DPSE_CACHE_DIR";

/// Content-addressed store of checkpoints and source datasets keyed by config hash.
class ArtifactCache {
 public:
  explicit ArtifactCache(std::filesystem::path dir);

  /// $DPSE_CACHE_DIR if set, else <output_dir>/cache.
  static std::filesystem::path default_dir(const std::filesystem::path& output_dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path checkpoint_path(const std::string& key) const;
  std::filesystem::path source_path(const std::string& key) const;

  /// nullopt if absent; IntegrityError if present but corrupt.
  std::optional<ShadowModel> load_model(const std::string& key) const;
  void store_model(const std::string& key, const ShadowModel& model) const;
  std::optional<std::vector<TaskDataset>> load_source(const std::string& key) const;
  void store_source(const std::string& key, const std::vector<TaskDataset>& tasks) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace dpse
