#include "dpse/shadow.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dpse/errors.hpp"

namespace dpse {
namespace {

ad::Tensor strictly_upper_ones(int n) {
  ad::Tensor u = ad::Tensor::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k) u(j, k) = 1.0;
  return u;
}

constexpr int kPairs = kProbePoints * (kProbePoints - 1) / 2;
constexpr double kRemainderSharpness = 50.0;
constexpr double kInitialShadeRadius = 0.04;  // normalized units
constexpr double kPointwiseBiasInit = -6.0;   // marginal hit probability ~0.25%

// Pair (j, k) -> column k.
ad::Tensor pair_target_matrix() {
  ad::Tensor a = ad::Tensor::Zero(kPairs, kProbePoints);
  int col = 0;
  for (int j = 0; j < kProbePoints; ++j)
    for (int k = j + 1; k < kProbePoints; ++k, ++col) a(col, k) = 1.0;
  return a;
}

ad::Tensor upper_ones_inclusive(int n) {
  ad::Tensor u = ad::Tensor::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = j; k < n; ++k) u(j, k) = 1.0;
  return u;
}

ad::Tensor make_pair_difference(int axis) {
  ad::Tensor d = ad::Tensor::Zero(2 * kProbePoints, kPairs);
  int col = 0;
  for (int j = 0; j < kProbePoints; ++j) {
    for (int k = j + 1; k < kProbePoints; ++k, ++col) {
      d(2 * j + axis, col) = 1.0;
      d(2 * k + axis, col) = -1.0;
    }
  }
  return d;
}

ad::Var mlp(std::span<const ad::Var> weights, std::size_t layers, ad::Var h) {
  for (std::size_t l = 0; l + 1 < layers; ++l) h = ad::tanh(ad::affine(h, weights[2 * l], weights[2 * l + 1]));
  return ad::affine(h, weights[2 * layers - 2], weights[2 * layers - 1]);
}

ad::Var pointwise_logits(std::span<const ad::Var> weights, std::size_t layers, ad::Var u) {
  ad::Tape& tape = *u.tape();
  const Eigen::Index b = u.rows();
  static const ad::Tensor dx_matrix = make_pair_difference(0);
  static const ad::Tensor dy_matrix = make_pair_difference(1);
  static const ad::Tensor targets = pair_target_matrix();
  static const ad::Tensor cumulative = upper_ones_inclusive(kProbePoints);

  ad::Var field = ad::reshape(mlp(weights, layers, ad::reshape(u, b * kProbePoints, 2)), b, kProbePoints);
  ad::Var log_m = -ad::softplus(-field);

  ad::Var dx = ad::matmul(u, tape.constant(dx_matrix));
  ad::Var dy = ad::matmul(u, tape.constant(dy_matrix));
  ad::Var inv_two_rho2 = 0.5 * ad::exp(-2.0 * weights.back());
  ad::Var spread = ad::matmul(ad::matmul(tape.constant(ad::Tensor::Ones(b, 1)), inv_two_rho2),
                              tape.constant(ad::Tensor::Ones(1, kPairs)));
  ad::Var unshaded = 1.0 - ad::exp(-((ad::square(dx) + ad::square(dy)) * spread));
  ad::Var log_shade = ad::matmul(ad::log(ad::clamp_min(unshaded, 1e-12)), tape.constant(targets));

  ad::Var log_n = log_m + log_shade;
  ad::Var left = 1.0 - ad::matmul(ad::exp(log_n), tape.constant(cumulative));
  // softplus(beta x) / beta keeps the remaining mass positive
  ad::Var remainder = (1.0 / kRemainderSharpness) * ad::softplus(kRemainderSharpness * left);
  return log_n - ad::log(ad::clamp_min(remainder, 1e-300));
}

ad::Tape& tape_of(std::span<const ad::Var> weights) {
  if (weights.empty() || weights[0].tape() == nullptr) throw ContractError("shadow weights are not bound to a tape");
  return *weights[0].tape();
}

}  // namespace

std::string to_string(ShadowHead head) {
  switch (head) {
    case ShadowHead::Auto: return "auto";
    case ShadowHead::Mlp: return "mlp";
    case ShadowHead::Pointwise: return "pointwise";
  }
  return "?";
}

ShadowHead shadow_head_from_string(const std::string& name) {
  if (name == "auto") return ShadowHead::Auto;
  if (name == "mlp") return ShadowHead::Mlp;
  if (name == "pointwise") return ShadowHead::Pointwise;
  throw ConfigError("unknown shadow head '" + name + "'");
}

const ad::Tensor& probe_pair_difference(int axis) {
  static const ad::Tensor dx = make_pair_difference(0);
  static const ad::Tensor dy = make_pair_difference(1);
  if (axis != 0 && axis != 1) throw ContractError("pair difference axis must be 0 or 1");
  return axis == 0 ? dx : dy;
}

double derived_fail(const OutcomeStats& s) {
  if (s.kind == StrategyKind::Spiral) return 1.0 - s.p_success;
  double fail = 1.0;
  for (Eigen::Index k = 0; k < s.hit_probability.size(); ++k) fail *= 1.0 - s.hit_probability(k);
  return fail;
}

double derived_cycle(const OutcomeStats& s, const TimingConfig& timing) {
  if (s.kind == StrategyKind::Spiral) return s.tau_search + (1.0 - s.p_success) * timing.t_fail;
  double expected = timing.t_setup;
  double reach = 1.0;  // probability that probe k is executed
  for (Eigen::Index k = 0; k < s.hit_probability.size(); ++k) {
    expected += timing.t_probe * reach;
    reach *= 1.0 - s.hit_probability(k);
  }
  return expected + reach * timing.t_fail;
}

std::size_t ShadowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  return n;
}

ShadowModel make_shadow_model(StrategyKind kind, const ParamBounds& bounds, std::uint64_t seed,
                              ShadowArchitecture arch) {
  if (arch.hidden_width < 0 || arch.hidden_layers < 1) throw ConfigError("shadow architecture must be non-empty");
  ShadowModel model;
  model.kind = kind;
  model.head = arch.head;
  if (model.head == ShadowHead::Auto)
    model.head = kind == StrategyKind::Probe ? ShadowHead::Pointwise : ShadowHead::Mlp;
  if (model.head == ShadowHead::Pointwise && kind != StrategyKind::Probe)
    throw ConfigError("the pointwise shadow head applies to probe search only");
  model.bounds = bounds;
  model.meta.seed = seed;
  if (bounds.lower.size() != model.input_dim()) throw ContractError("bounds dimension does not match strategy kind");

  if (arch.hidden_width == 0) arch.hidden_width = model.head == ShadowHead::Pointwise ? 64 : 128;
  Rng rng(seed, 0x776569676874ull);
  int fan_in = model.network_input_dim();
  auto add_layer = [&](int fan_out) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    ad::Tensor w(fan_in, fan_out), b(1, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-limit, limit);
    model.weights.push_back(std::move(w));
    model.weights.push_back(std::move(b));
    fan_in = fan_out;
  };
  for (int l = 0; l < arch.hidden_layers; ++l) add_layer(arch.hidden_width);
  add_layer(model.network_output_dim());
  if (model.head == ShadowHead::Pointwise) {
    model.weights.back().setConstant(kPointwiseBiasInit);
    model.weights.push_back(ad::Tensor::Constant(1, 1, std::log(kInitialShadeRadius)));
  }
  return model;
}

std::vector<ad::Var> bind_weights(ad::Tape& tape, const ShadowModel& model, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(model.weights.size());
  for (const auto& w : model.weights) vars.push_back(trainable ? tape.leaf(w) : tape.constant(w));
  return vars;
}

OutcomeVars forward_normalized(const ShadowModel& model, std::span<const ad::Var> weights, ad::Var inputs) {
  if (weights.size() != model.weights.size() || weights.size() < 2)
    throw ContractError("weight binding does not match the model");
  if (inputs.cols() != model.input_dim())
    throw ContractError(fmt::format("shadow input has {} columns, expected {}", inputs.cols(), model.input_dim()));
  const std::size_t layers = model.layer_count();
  OutcomeVars out;
  out.kind = model.kind;
  if (model.head == ShadowHead::Pointwise) {
    out.logits = pointwise_logits(weights, layers, inputs);
    return out;
  }
  ad::Var head = mlp(weights, layers, inputs);
  if (model.kind == StrategyKind::Probe) {
    out.logits = head;
  } else {
    out.logits = ad::slice(head, 0, 1);
    out.tau = model.tau_scale * ad::softplus(ad::slice(head, 1, 1));
  }
  return out;
}

OutcomeVars forward(const ShadowModel& model, std::span<const ad::Var> weights, ad::Var raw_inputs) {
  ad::Tape& tape = *raw_inputs.tape();
  const Eigen::Index rows = raw_inputs.rows();
  if (raw_inputs.cols() != model.input_dim()) throw ContractError("raw shadow input has the wrong dimension");
  const Eigen::RowVectorXd span = (model.bounds.upper - model.bounds.lower).transpose();
  const Eigen::RowVectorXd gain = (2.0 / span.array()).matrix();
  const Eigen::RowVectorXd offset = (-1.0 - 2.0 * model.bounds.lower.transpose().array() / span.array()).matrix();
  ad::Var g = tape.constant(gain.replicate(rows, 1));
  ad::Var o = tape.constant(offset.replicate(rows, 1));
  return forward_normalized(model, weights, raw_inputs * g + o);
}

ad::Var fail_probability(const OutcomeVars& out) {
  if (out.kind == StrategyKind::Spiral) return ad::sigmoid(-out.logits);
  // log(1 - sigmoid(z)) = -softplus(z)
  return ad::exp(-ad::sum_rows(ad::softplus(out.logits)));
}

ad::Var expected_cycle(const OutcomeVars& out, const TimingConfig& timing) {
  if (out.kind == StrategyKind::Spiral) return out.tau + timing.t_fail * fail_probability(out);
  ad::Tape& tape = *out.logits.tape();
  ad::Var log_miss = -ad::softplus(out.logits);
  ad::Var log_reach = ad::matmul(log_miss, tape.constant(strictly_upper_ones(kProbePoints)));
  ad::Var reach = ad::exp(log_reach);
  return (timing.t_probe * ad::sum_rows(reach) + timing.t_fail * fail_probability(out)) + timing.t_setup;
}

OutcomeStats stats_from(const OutcomeVars& out, Eigen::Index row) {
  OutcomeStats s;
  s.kind = out.kind;
  const ad::Tensor& z = out.logits.value();
  auto sig = [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
  if (out.kind == StrategyKind::Probe) {
    s.hit_probability.resize(z.cols());
    for (Eigen::Index k = 0; k < z.cols(); ++k) s.hit_probability(k) = sig(z(row, k));
  } else {
    s.p_success = sig(z(row, 0));
    s.tau_search = out.tau.value()(row, 0);
  }
  return s;
}

OutcomeStats predict(const ShadowModel& model, const StrategyParams& x) {
  if (x.kind != model.kind || x.values.size() != model.input_dim())
    throw ContractError("predict: parameter vector does not match the shadow model");
  Eigen::VectorXd clamped = model.bounds.clamp(x.values);
  if (clamped != x.values) fmt::print(stderr, "warning: shadow input outside parameter bounds was clamped\n");
  ad::Tape tape;
  auto w = bind_weights(tape, model, false);
  ad::Tensor u = model.bounds.normalize(clamped).transpose();
  return stats_from(forward_normalized(model, w, tape.constant(u)), 0);
}

TrainingBatch make_batch(const ShadowModel& model, std::span<const ExecutionRecord* const> records) {
  const auto n = static_cast<Eigen::Index>(records.size());
  TrainingBatch b;
  b.inputs.resize(n, model.input_dim());
  if (model.kind == StrategyKind::Probe) {
    b.labels = ad::Tensor::Zero(n, kProbePoints);
    b.mask = ad::Tensor::Zero(n, kProbePoints);
  } else {
    b.labels = ad::Tensor::Zero(n, 2);
    b.mask = ad::Tensor::Zero(n, 1);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const ExecutionRecord& r = *records[i];
    if (r.params.kind != model.kind) throw ContractError("training batch mixes strategy kinds");
    b.inputs.row(i) = model.bounds.normalize(r.params.values).transpose();
    if (model.kind == StrategyKind::Probe) {
      for (int k = 0; k < kProbePoints; ++k) {
        b.mask(i, k) = r.probes[k].probed ? 1.0 : 0.0;
        b.labels(i, k) = r.probes[k].hit ? 1.0 : 0.0;
      }
    } else {
      b.labels(i, 0) = r.success ? 1.0 : 0.0;
      b.labels(i, 1) = r.duration;
      b.mask(i, 0) = r.success ? 1.0 : 0.0;
    }
  }
  return b;
}

TrainingBatch make_batch(const ShadowModel& model, std::span<const ExecutionRecord> records) {
  std::vector<const ExecutionRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return make_batch(model, ptrs);
}

ad::Var training_loss(const ShadowModel& model, std::span<const ad::Var> weights, const TrainingBatch& batch,
                      double lambda_tau) {
  if (batch.inputs.rows() == 0) throw ContractError("training_loss on an empty batch");
  ad::Tape& tape = tape_of(weights);
  const double inv_n = 1.0 / static_cast<double>(batch.inputs.rows());
  OutcomeVars out = forward_normalized(model, weights, tape.constant(batch.inputs));
  if (model.kind == StrategyKind::Probe) {
    // BCE with logits: softplus(z) - y z, restricted to probed indices.
    ad::Var y = tape.constant(batch.labels);
    ad::Var m = tape.constant(batch.mask);
    ad::Var bce = ad::softplus(out.logits) - y * out.logits;
    return inv_n * ad::sum(m * bce);
  }
  ad::Var success = tape.constant(batch.labels.col(0));
  ad::Var duration = tape.constant(batch.labels.col(1));
  ad::Var m = tape.constant(batch.mask);
  ad::Var bce = ad::softplus(out.logits) - success * out.logits;
  ad::Var timing_err = m * ad::square(out.tau - duration);
  return inv_n * ad::sum(bce + lambda_tau * timing_err);
}

double training_loss(const ShadowModel& model, std::span<const ExecutionRecord> records, double lambda_tau) {
  if (records.empty()) throw ContractError("training_loss on an empty batch");
  ad::Tape tape;
  auto w = bind_weights(tape, model, false);
  return training_loss(model, w, make_batch(model, records), lambda_tau).scalar();
}

}  // namespace dpse
