#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/circular_buffer.hpp>

#include "dpse/inversion.hpp"
#include "dpse/shadow.hpp"
#include "dpse/sim.hpp"
#include "json.hpp"

namespace dpse {

/// Union of per-task datasets used for pretraining and meta-training.
struct SourceDataset {
  std::vector<TaskDataset> tasks;

  /// ContractError if empty or the tasks mix strategy kinds.
  void validate() const;
  StrategyKind kind() const;
  std::size_t record_count() const;
};

/// Fixed-capacity FIFO of the most recent executions.
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 128);

  void push(ExecutionRecord record);
  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return buffer_.capacity(); }
  bool empty() const { return buffer_.empty(); }
  bool full() const { return buffer_.full(); }
  const ExecutionRecord& operator[](std::size_t i) const { return buffer_[i]; }
  /// Oldest first.
  std::vector<ExecutionRecord> records() const;

 private:
  boost::circular_buffer<ExecutionRecord> buffer_;
};

enum class TrainerKind { PretrainFinetune, Fomaml, Reptile };

std::string to_string(TrainerKind kind);
TrainerKind trainer_kind_from_string(const std::string& name);

struct TrainConfig {
  TrainerKind trainer = TrainerKind::PretrainFinetune;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double lambda_tau = kDefaultLambdaTau;
  ShadowArchitecture architecture;
  // meta-learning
  int inner_steps = 5;
  double inner_lr = 1e-3;
  double meta_lr = 1e-3;
  int meta_batch = 4;        // tasks per FOMAML meta-update
  double epsilon = 0.5;      // Reptile interpolation
  int n_meta = 128;          // records per task available for adaptation
  int query_size = 32;       // FOMAML query split (tail of each task)

  void validate() const;

  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct LossLogEntry {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
};

/// Per-epoch loss log; written as CSV with header "epoch,split,loss".
struct LossLog {
  std::vector<LossLogEntry> entries;

  void add(int epoch, std::string split, double loss) { entries.push_back({epoch, std::move(split), loss}); }
  void write_csv(std::ostream& out) const;
};

/// Mini-batch Adam on pooled source records, from a model initialized with cfg.seed.
ShadowModel pretrain(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                     LossLog* log = nullptr);

/// Continues training a copy of `pretrained` on `records` only.
ShadowModel finetune(const ShadowModel& pretrained, std::span<const ExecutionRecord> records, const TrainConfig& cfg,
                     LossLog* log = nullptr);
ShadowModel finetune(const ShadowModel& pretrained, const RingBuffer& buffer, const TrainConfig& cfg,
                     LossLog* log = nullptr);

/// `steps` Adam updates with mini-batches drawn epoch-wise from a shuffle of
/// `records` (fresh optimizer state).
/// Returns the mean pre-update batch loss.
double train_steps(ShadowModel& model, std::span<const ExecutionRecord* const> records, int steps, int batch_size,
                   double learning_rate, Rng& rng, double lambda_tau = kDefaultLambdaTau);

/// First-order MAML: per meta-batch, k plain gradient steps on each task's
/// support split, query gradient at the adapted weights applied to the
/// initial weights through Adam. One epoch visits every task once.
ShadowModel meta_train_fomaml(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                              LossLog* log = nullptr);

/// Reptile: per task, k inner Adam steps, then move the initial weights a
/// fraction epsilon toward the adapted ones.
ShadowModel meta_train_reptile(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                               LossLog* log = nullptr);
/// One Reptile outer update on a single task's records.
void reptile_update(ShadowModel& model, std::span<const ExecutionRecord* const> records, const TrainConfig& cfg,
                    Rng& rng);

/// Dispatches on cfg.trainer.
ShadowModel train_source(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                         LossLog* log = nullptr);

/// Settings of the continuous execute / refit / optimize loop.
struct ContinuousConfig {
  TrainConfig finetune = TrainConfig::finetune_defaults();
  Objective objective;
  InversionConfig inversion;
  SearchRegion region;
  TimingConfig timing;
  std::size_t warmup = 16;
  std::size_t buffer_capacity = 128;
};

struct ContinuousState {
  std::shared_ptr<const ShadowModel> pretrained;
  RingBuffer buffer;
  StrategyParams x_init;   // L_init reference
  StrategyParams current;  // x_t
  std::optional<ShadowModel> model;  // latest refit
  std::optional<InversionResult> last_inversion;
  std::uint64_t steps = 0;

  ContinuousState(std::shared_ptr<const ShadowModel> pretrained, StrategyParams x_init, std::size_t capacity = 128);
};

/// Executes x_t once, advances the process, appends the record, and once the
/// buffer holds `warmup` records refits from the original pretrained model
/// and inverts from x_t to obtain x_{t+1}. Returns the executed record.
ExecutionRecord continuous_step(ContinuousState& state, HoleProcess& process, const ContinuousConfig& cfg);

/// Held-out mean training loss after adapting `initial` on `adaptation` records.
double adapted_loss(const ShadowModel& initial, std::span<const ExecutionRecord> adaptation,
                    std::span<const ExecutionRecord> held_out, const TrainConfig& adapt_cfg);

}  // namespace dpse
