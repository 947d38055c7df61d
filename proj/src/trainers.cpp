#include "dpse/trainers.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "dpse/errors.hpp"

namespace dpse {
namespace {

std::vector<const ExecutionRecord*> pointers(std::span<const ExecutionRecord> records) {
  std::vector<const ExecutionRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  return out;
}

double gradients(const ShadowModel& model, std::span<const ExecutionRecord* const> batch, double lambda_tau,
                 std::vector<ad::Tensor>& grads) {
  ad::Tape tape;
  auto w = bind_weights(tape, model, true);
  ad::Var loss = training_loss(model, w, make_batch(model, batch), lambda_tau);
  tape.backward(loss);
  grads.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) grads[i] = tape.grad(w[i]);
  return loss.scalar();
}

void check_kind(const ShadowModel& model, std::span<const ExecutionRecord* const> records) {
  for (const auto* r : records)
    if (r->params.kind != model.kind) throw ContractError("training records do not match the model's strategy kind");
}

/// Full passes over `pool` in shuffled mini-batches; logs the mean batch loss per epoch.
void run_epochs(ShadowModel& model, std::vector<const ExecutionRecord*> pool, const TrainConfig& cfg, double lr,
                Rng& rng, LossLog* log, const std::string& split) {
  ad::AdamState adam;
  const ad::AdamConfig adam_cfg{lr};
  std::vector<ad::Tensor> grads;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<const ExecutionRecord*>(pool));
    double total = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, pool.size() - start);
      std::span<const ExecutionRecord* const> batch(pool.data() + start, count);
      total += gradients(model, batch, cfg.lambda_tau, grads) * static_cast<double>(count);
      ad::adam_step(model.weights, grads, adam, adam_cfg);
    }
    if (log) log->add(epoch, split, total / static_cast<double>(pool.size()));
  }
}

std::vector<const ExecutionRecord*> pooled(const SourceDataset& source) {
  std::vector<const ExecutionRecord*> pool;
  pool.reserve(source.record_count());
  for (const auto& t : source.tasks)
    for (const auto& r : t.records) pool.push_back(&r);
  return pool;
}

ShadowModel initial_model(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                          const std::string& trainer) {
  ShadowModel model = make_shadow_model(source.kind(), bounds, cfg.seed, cfg.architecture);
  model.meta.tasks = source.tasks.size();
  model.meta.records = source.tasks.front().records.size();
  model.meta.seed = cfg.seed;
  model.meta.trainer = trainer;
  return model;
}

void require_meta_source(const SourceDataset& source) {
  source.validate();
  if (source.tasks.size() < 2) throw ContractError("meta-training needs at least two tasks");
}

}  // namespace

void SourceDataset::validate() const {
  if (tasks.empty()) throw ContractError("source dataset has no tasks");
  for (const auto& t : tasks) {
    if (t.kind != tasks.front().kind) throw ContractError("source dataset mixes strategy kinds");
    if (t.records.empty()) throw ContractError("source dataset contains an empty task");
    for (const auto& r : t.records)
      if (r.params.kind != t.kind) throw ContractError("task record does not match the task's strategy kind");
  }
}

StrategyKind SourceDataset::kind() const {
  if (tasks.empty()) throw ContractError("source dataset has no tasks");
  return tasks.front().kind;
}

std::size_t SourceDataset::record_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.records.size();
  return n;
}

RingBuffer::RingBuffer(std::size_t capacity) : buffer_(capacity) {
  if (capacity == 0) throw ConfigError("ring buffer capacity must be positive");
}

void RingBuffer::push(ExecutionRecord record) { buffer_.push_back(std::move(record)); }

std::vector<ExecutionRecord> RingBuffer::records() const { return {buffer_.begin(), buffer_.end()}; }

std::string to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::PretrainFinetune: return "pretrain-finetune";
    case TrainerKind::Fomaml: return "fomaml";
    case TrainerKind::Reptile: return "reptile";
  }
  return "pretrain-finetune";
}

TrainerKind trainer_kind_from_string(const std::string& name) {
  if (name == "pretrain-finetune") return TrainerKind::PretrainFinetune;
  if (name == "fomaml") return TrainerKind::Fomaml;
  if (name == "reptile") return TrainerKind::Reptile;
  throw ConfigError("unknown trainer '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lambda_tau >= 0.0)) throw ConfigError("lambda_tau must be >= 0");
  if (inner_steps < 0) throw ConfigError("inner steps must be >= 0");
  if (!(inner_lr > 0.0 && meta_lr > 0.0)) throw ConfigError("meta learning rates must be positive");
  if (meta_batch < 1) throw ConfigError("meta batch must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("reptile epsilon must lie in [0, 1]");
  if (n_meta < 1 || query_size < 1) throw ConfigError("n_meta and query size must be positive");
  if (architecture.hidden_width < 0 || architecture.hidden_layers < 1) throw ConfigError("bad shadow architecture");
}

TrainConfig TrainConfig::pretrain_defaults() { return {}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 3e-4;
  return cfg;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"trainer", to_string(c.trainer)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"lambda_tau", c.lambda_tau},
          {"head", to_string(c.architecture.head)},
          {"hidden_width", c.architecture.hidden_width},
          {"hidden_layers", c.architecture.hidden_layers},
          {"inner_steps", c.inner_steps},
          {"inner_lr", c.inner_lr},
          {"meta_lr", c.meta_lr},
          {"meta_batch", c.meta_batch},
          {"epsilon", c.epsilon},
          {"n_meta", c.n_meta},
          {"query_size", c.query_size}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    if (j.contains("trainer")) c.trainer = trainer_kind_from_string(j["trainer"].get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.lambda_tau = j.value("lambda_tau", c.lambda_tau);
    if (j.contains("head")) c.architecture.head = shadow_head_from_string(j.at("head").get<std::string>());
    c.architecture.hidden_width = j.value("hidden_width", c.architecture.hidden_width);
    c.architecture.hidden_layers = j.value("hidden_layers", c.architecture.hidden_layers);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.inner_lr = j.value("inner_lr", c.inner_lr);
    c.meta_lr = j.value("meta_lr", c.meta_lr);
    c.meta_batch = j.value("meta_batch", c.meta_batch);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.n_meta = j.value("n_meta", c.n_meta);
    c.query_size = j.value("query_size", c.query_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

void LossLog::write_csv(std::ostream& out) const {
  out << "epoch,split,loss\n";
  for (const auto& e : entries) out << fmt::format("{},{},{:.17g}\n", e.epoch, e.split, e.loss);
}

ShadowModel pretrain(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg, LossLog* log) {
  source.validate();
  cfg.validate();
  ShadowModel model = initial_model(source, bounds, cfg, "pretrain");
  Rng rng(cfg.seed, 0x707265ull);
  run_epochs(model, pooled(source), cfg, cfg.learning_rate, rng, log, "pretrain");
  return model;
}

ShadowModel finetune(const ShadowModel& pretrained, std::span<const ExecutionRecord> records, const TrainConfig& cfg,
                     LossLog* log) {
  if (records.empty()) throw ContractError("finetune needs at least one record");
  cfg.validate();
  auto pool = pointers(records);
  check_kind(pretrained, pool);
  ShadowModel model = pretrained;
  Rng rng(cfg.seed, 0x66696eull);
  run_epochs(model, std::move(pool), cfg, cfg.learning_rate, rng, log, "finetune");
  return model;
}

ShadowModel finetune(const ShadowModel& pretrained, const RingBuffer& buffer, const TrainConfig& cfg, LossLog* log) {
  const auto records = buffer.records();
  return finetune(pretrained, std::span<const ExecutionRecord>(records), cfg, log);
}

double train_steps(ShadowModel& model, std::span<const ExecutionRecord* const> records, int steps, int batch_size,
                   double learning_rate, Rng& rng, double lambda_tau) {
  if (records.empty()) throw ContractError("train_steps needs at least one record");
  if (steps <= 0) return 0.0;
  std::vector<const ExecutionRecord*> order(records.begin(), records.end());
  std::vector<const ExecutionRecord*> batch;
  std::vector<ad::Tensor> grads;
  ad::AdamState adam;
  const ad::AdamConfig adam_cfg{learning_rate};
  std::size_t cursor = order.size();
  double total = 0.0;
  for (int s = 0; s < steps; ++s) {
    batch.clear();
    while (batch.size() < static_cast<std::size_t>(batch_size) && batch.size() < order.size()) {
      if (cursor == order.size()) {
        rng.shuffle(std::span<const ExecutionRecord*>(order));
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    total += gradients(model, batch, lambda_tau, grads);
    ad::adam_step(model.weights, grads, adam, adam_cfg);
  }
  return total / steps;
}

ShadowModel meta_train_fomaml(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                              LossLog* log) {
  require_meta_source(source);
  cfg.validate();
  ShadowModel model = initial_model(source, bounds, cfg, "fomaml");
  Rng rng(cfg.seed, 0x666f6dull);
  std::vector<std::size_t> order(source.tasks.size());
  std::iota(order.begin(), order.end(), 0);
  ad::AdamState adam;
  const ad::AdamConfig adam_cfg{cfg.meta_lr};
  std::vector<ad::Tensor> grads, meta_grads;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.meta_batch)) {
      const std::size_t count = std::min<std::size_t>(cfg.meta_batch, order.size() - start);
      meta_grads.assign(model.weights.size(), ad::Tensor());
      for (std::size_t i = 0; i < model.weights.size(); ++i)
        meta_grads[i] = ad::Tensor::Zero(model.weights[i].rows(), model.weights[i].cols());
      for (std::size_t t = start; t < start + count; ++t) {
        const auto& records = source.tasks[order[t]].records;
        const int n = static_cast<int>(records.size());
        if (n <= cfg.query_size) throw ConfigError("FOMAML tasks need more records than the query split");
        const int support_size = std::min(cfg.n_meta, n - cfg.query_size);
        auto all = pointers(records);
        std::span<const ExecutionRecord* const> support(all.data(), support_size);
        std::span<const ExecutionRecord* const> query(all.data() + (n - cfg.query_size), cfg.query_size);

        ShadowModel adapted = model;
        for (int k = 0; k < cfg.inner_steps; ++k) {
          gradients(adapted, support, cfg.lambda_tau, grads);
          for (std::size_t i = 0; i < grads.size(); ++i) adapted.weights[i] -= cfg.inner_lr * grads[i];
        }
        epoch_loss += gradients(adapted, query, cfg.lambda_tau, grads);
        for (std::size_t i = 0; i < grads.size(); ++i) meta_grads[i] += grads[i] / static_cast<double>(count);
      }
      ad::adam_step(model.weights, meta_grads, adam, adam_cfg);
    }
    if (log) log->add(epoch, "meta", epoch_loss / static_cast<double>(order.size()));
  }
  return model;
}

void reptile_update(ShadowModel& model, std::span<const ExecutionRecord* const> records, const TrainConfig& cfg,
                    Rng& rng) {
  ShadowModel adapted = model;
  train_steps(adapted, records, cfg.inner_steps, cfg.batch_size, cfg.inner_lr, rng, cfg.lambda_tau);
  for (std::size_t i = 0; i < model.weights.size(); ++i)
    model.weights[i] += cfg.epsilon * (adapted.weights[i] - model.weights[i]);
}

ShadowModel meta_train_reptile(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                               LossLog* log) {
  require_meta_source(source);
  cfg.validate();
  ShadowModel model = initial_model(source, bounds, cfg, "reptile");
  Rng rng(cfg.seed, 0x726570ull);
  std::vector<std::size_t> order(source.tasks.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t t : order) {
      const auto& records = source.tasks[t].records;
      const std::size_t n = std::min<std::size_t>(cfg.n_meta, records.size());
      auto all = pointers(records);
      std::span<const ExecutionRecord* const> support(all.data(), n);
      epoch_loss += training_loss(model, std::span<const ExecutionRecord>(records.data(), n), cfg.lambda_tau);
      reptile_update(model, support, cfg, rng);
    }
    if (log) log->add(epoch, "meta", epoch_loss / static_cast<double>(order.size()));
  }
  return model;
}

ShadowModel train_source(const SourceDataset& source, const ParamBounds& bounds, const TrainConfig& cfg,
                         LossLog* log) {
  switch (cfg.trainer) {
    case TrainerKind::PretrainFinetune: return pretrain(source, bounds, cfg, log);
    case TrainerKind::Fomaml: return meta_train_fomaml(source, bounds, cfg, log);
    case TrainerKind::Reptile: return meta_train_reptile(source, bounds, cfg, log);
  }
  throw ContractError("unknown trainer kind");
}

ContinuousState::ContinuousState(std::shared_ptr<const ShadowModel> pretrained_model, StrategyParams x0,
                                 std::size_t capacity)
    : pretrained(std::move(pretrained_model)), buffer(capacity), x_init(x0), current(std::move(x0)) {
  if (!pretrained) throw ContractError("continuous state needs a pretrained model");
  if (x_init.kind != pretrained->kind) throw ContractError("initial parameters do not match the pretrained model");
}

ExecutionRecord continuous_step(ContinuousState& state, HoleProcess& process, const ContinuousConfig& cfg) {
  if (cfg.warmup < 1) throw ConfigError("continuous warmup must be >= 1");
  HolePose hole = process.sample_hole();
  ExecutionRecord record = simulate(state.current, hole, cfg.region, cfg.timing);
  process.advance();
  state.buffer.push(record);
  ++state.steps;
  if (state.buffer.size() >= cfg.warmup) {
    ShadowModel model = finetune(*state.pretrained, state.buffer, cfg.finetune);
    Objective objective = cfg.objective;
    if (!objective.reference) objective.reference = state.x_init;
    InversionResult inv = invert(model, state.current, objective, cfg.inversion, cfg.timing);
    state.current = inv.params;
    state.model = std::move(model);
    state.last_inversion = std::move(inv);
  }
  return record;
}

double adapted_loss(const ShadowModel& initial, std::span<const ExecutionRecord> adaptation,
                    std::span<const ExecutionRecord> held_out, const TrainConfig& adapt_cfg) {
  if (adaptation.empty()) return training_loss(initial, held_out, adapt_cfg.lambda_tau);
  ShadowModel adapted = finetune(initial, adaptation, adapt_cfg);
  return training_loss(adapted, held_out, adapt_cfg.lambda_tau);
}

}  // namespace dpse
