#include "dpse/cache.hpp"

#include <cstdlib>

#include "dpse/checkpoint.hpp"
#include "dpse/dataset_io.hpp"
#include "dpse/errors.hpp"

namespace dpse {
namespace {

template <typename Write>
void atomic_write(const std::filesystem::path& target, Write write) {
  std::filesystem::create_directories(target.parent_path());
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  write(tmp);
  std::filesystem::rename(tmp, target);
}

}  // namespace

ArtifactCache::ArtifactCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ArtifactCache::default_dir(const std::filesystem::path& output_dir) {
  if (const char* env = std::getenv(kCacheEnv); env != nullptr && *env != '\0') return env;
  return output_dir / "cache";
}

std::filesystem::path ArtifactCache::checkpoint_path(const std::string& key) const {
  return dir_ / ("shadow-" + key + ".ckpt");
}

std::filesystem::path ArtifactCache::source_path(const std::string& key) const {
  return dir_ / ("source-" + key + ".bin");
}

std::optional<ShadowModel> ArtifactCache::load_model(const std::string& key) const {
  const auto path = checkpoint_path(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return load_checkpoint(path);
}

void ArtifactCache::store_model(const std::string& key, const ShadowModel& model) const {
  atomic_write(checkpoint_path(key), [&](const std::filesystem::path& p) { save_checkpoint(p, model); });
}

std::optional<std::vector<TaskDataset>> ArtifactCache::load_source(const std::string& key) const {
  const auto path = source_path(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return load_source_dataset(path);
}

void ArtifactCache::store_source(const std::string& key, const std::vector<TaskDataset>& tasks) const {
  atomic_write(source_path(key), [&](const std::filesystem::path& p) { save_source_dataset(p, tasks); });
}

}  // namespace dpse
