#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpse/config.hpp"
#include "dpse/shadow.hpp"
#include "dpse/trainers.hpp"

namespace dpse {

struct RunOptions {
  bool no_train = false;          // cache only; a missing checkpoint is a ConfigError
  bool write_files = true;        // CSV / SVG / JSON under cfg.output_dir
  bool write_plots = true;
  int threads = 1;
  std::ostream* log = nullptr;    // progress lines; nullptr for silence
  std::optional<std::filesystem::path> cache_dir;  // overrides ArtifactCache::default_dir
};

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be
/// stored by index so that output order never depends on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Seed-derived mixture of test distribution `seed`.
GaussianMixture2D test_mixture(const ExperimentConfig& cfg, std::uint64_t seed);

/// M tasks of N executions with uniformly sampled parameters.
SourceDataset generate_source(StrategyKind kind, int m, int n, const MixtureConfig& mixture_cfg,
                              const SearchRegion& region, const TimingConfig& timing, std::uint64_t seed,
                              int threads = 1);
/// Checksum of the serialized datasets.
std::string source_checksum(const SourceDataset& source);

/// Pretrained shadow model for cfg, from the cache when available.
ShadowModel obtain_pretrained(const ExperimentConfig& cfg, const RunOptions& opts);

/// Objective of a DPSE variant (regularizer by method, L_init reference x0).
Objective method_objective(const ExperimentConfig& cfg, Method method, const StrategyParams& x0);

/// Passive finetuning records of test distribution `seed` (charged executions).
TaskDataset passive_buffer(const ExperimentConfig& cfg, std::uint64_t seed);

struct MetricsRow {
  std::string method;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_cycle = 0.0;
  std::uint64_t executions = 0;
  double wall_clock = 0.0;  // s; written to timing.csv only
  bool privileged = false;
  std::string note;
  StrategyParams params;
};

struct MethodSummary {
  std::string method;
  double mean_success = 0.0;
  double mean_cycle = 0.0;
  double mean_executions = 0.0;
  int runs = 0;
};

struct StationaryReport {
  ExperimentKind kind = ExperimentKind::ProbeStationary;
  std::string config_hash;
  std::vector<MetricsRow> rows;  // ordered by seed, then method

  /// Means over seeds per method, in first-appearance order.
  std::vector<MethodSummary> summary() const;
  std::optional<MethodSummary> find(const std::string& method) const;
};

StationaryReport run_stationary(const ExperimentConfig& cfg, const RunOptions& opts);
void write_metrics_csv(std::ostream& out, const StationaryReport& report);
void write_summary_csv(std::ostream& out, const StationaryReport& report);

struct StepRow {
  std::string process;
  std::string method;
  std::uint64_t seed = 0;
  int t = 0;
  double oracle_success = 0.0;  // of x_t at the distribution of step t
  bool executed_success = false;
  int cumulative_failures = 0;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();       // mean touch point / spiral center of x_t
  Eigen::Vector2d mixture_mean = Eigen::Vector2d::Zero();   // of the step-t distribution
};

struct FailureTableRow {
  std::string process;
  std::string method;
  double mean_failures = 0.0;  // cumulative over the horizon, averaged over seeds
  double reduction_vs_fixed = 0.0;  // relative, NaN without a fixed row
};

struct NonstationaryReport {
  std::string config_hash;
  std::vector<StepRow> rows;  // ordered by process, seed, method, t
  std::vector<FailureTableRow> table() const;
};

NonstationaryReport run_nonstationary(const ExperimentConfig& cfg, const RunOptions& opts);
void write_steps_csv(std::ostream& out, const NonstationaryReport& report);
void write_failure_table_csv(std::ostream& out, const NonstationaryReport& report);

struct MetaRow {
  std::string method;  // dpse, fomaml-<n>, reptile-<n>
  int n_meta = 0;
  std::uint64_t task = 0;
  double heldout_loss = 0.0;
};

struct MetaReport {
  std::string config_hash;
  std::string source_checksum;
  std::vector<MetaRow> rows;
  /// Mean held-out loss per method, in first-appearance order.
  std::vector<std::pair<std::string, double>> means() const;
  /// Human-readable ordering checks (one line each).
  std::vector<std::string> ordering() const;
};

MetaReport run_meta_comparison(const ExperimentConfig& cfg, const RunOptions& opts);
void write_meta_csv(std::ostream& out, const MetaReport& report);

/// Centroid of the touch points, or the spiral center.
Eigen::Vector2d pattern_centroid(const StrategyParams& params);

}  // namespace dpse
