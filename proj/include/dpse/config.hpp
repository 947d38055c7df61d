#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dpse/baselines.hpp"
#include "dpse/inversion.hpp"
#include "dpse/mixture.hpp"
#include "dpse/process.hpp"
#include "dpse/trainers.hpp"
#include "json.hpp"

namespace dpse {

enum class ExperimentKind { SpiralStationary, ProbeStationary, ProbeNonstationary, MetaComparison };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
StrategyKind strategy_of(ExperimentKind kind);

enum class Method { Dpse, DpseLinit, DpseCdist, Fixed, Pca, Gmm, Nsga2, Fomaml, Reptile };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
bool method_allowed(Method method, ExperimentKind kind);
bool is_dpse(Method method);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::ProbeStationary;
  std::vector<Method> methods;
  int m_train = 200;
  int n_train = 128;
  int m_test = 10;   // test distributions (seeds)
  int n_test = 128;  // finetuning executions per test distribution
  int horizon = 100;
  int eval_samples = 10000;
  std::uint64_t seed = 1;              // source data and training
  std::vector<std::uint64_t> seeds;    // test distributions; empty -> 1..m_test
  std::filesystem::path output_dir = "out";

  MixtureConfig train_mixture;
  MixtureConfig test_mixture;
  SearchRegion region;
  TimingConfig timing;
  TrainConfig pretrain = TrainConfig::pretrain_defaults();
  TrainConfig finetune = TrainConfig::finetune_defaults();
  Objective objective;
  InversionConfig inversion;
  Nsga2Config nsga2 = Nsga2Config::probe_preset();
  GmmConfig gmm;

  // nonstationary
  std::vector<ProcessKind> processes{ProcessKind::Drift, ProcessKind::Brownian, ProcessKind::Shift};
  ProcessParams process;
  std::size_t warmup = 16;

  // meta comparison
  TrainConfig fomaml;
  TrainConfig reptile;
  std::vector<int> fomaml_n_meta{5, 128};

  /// ConfigError on any invalid field or method / experiment combination.
  void validate() const;
  std::vector<std::uint64_t> test_seeds() const;
};

ExperimentConfig preset(ExperimentKind kind);

nlohmann::json to_json(const SearchRegion& region);
SearchRegion search_region_from_json(const nlohmann::json& j, SearchRegion defaults = {});
nlohmann::json to_json(const TimingConfig& timing);
TimingConfig timing_config_from_json(const nlohmann::json& j, TimingConfig defaults = {});
nlohmann::json to_json(const GmmConfig& cfg);
GmmConfig gmm_config_from_json(const nlohmann::json& j, GmmConfig defaults = {});

/// Every field except output_dir.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Fields absent from `j` keep the preset of j["kind"].
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// 64-bit hash as 16 hex digits.
std::string hash_bytes(std::string_view bytes);
/// hash_bytes of the canonical (key-sorted) JSON dump.
std::string hash_json(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& cfg);
/// Key of the pretrained checkpoint: only the fields pretraining depends on.
std::string pretrain_key(const ExperimentConfig& cfg);

}  // namespace dpse
