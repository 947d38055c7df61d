#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpse/adgraph.hpp"
#include "dpse/sim.hpp"

namespace dpse {

/// Summary statistics of the outcome distribution for one parameter vector.
///   probe:  q_k = P(probe k hits | probes 1..k-1 missed), k = 1..16
///   spiral: p_success and the expected search duration tau_search (s)
struct OutcomeStats {
  StrategyKind kind = StrategyKind::Probe;
  Eigen::VectorXd hit_probability;  // probe, length 16
  double p_success = 0.0;           // spiral
  double tau_search = 0.0;          // spiral
};

/// P(fail): prod_k (1 - q_k) for probe, 1 - p_success for spiral.
double derived_fail(const OutcomeStats& stats);
/// Expected cycle time (s) implied by the stats.
double derived_cycle(const OutcomeStats& stats, const TimingConfig& timing);

/// Mlp: one network on the full parameter vector.
/// Pointwise (probe only): a network shared across touch points maps each
/// point to the logit of its marginal hit probability m_k; earlier points
/// shade later ones by s(d) = 1 - exp(-d^2 / 2 rho^2) with a learned rho, and
///   n_k = m_k prod_{j<k} s(d_jk),  q_k = n_k / (1 - sum_{j<k} n_j).
/// Auto picks Pointwise for probe and Mlp for spiral.
enum class ShadowHead { Auto, Mlp, Pointwise };

std::string to_string(ShadowHead head);
ShadowHead shadow_head_from_string(const std::string& name);

/// hidden_width 0 selects 128 for the MLP and 64 for the pointwise head.
struct ShadowArchitecture {
  ShadowHead head = ShadowHead::Auto;
  int hidden_width = 0;
  int hidden_layers = 3;
};

struct TrainingMeta {
  std::uint64_t tasks = 0;    // M
  std::uint64_t records = 0;  // N per task
  std::uint64_t seed = 0;
  std::string trainer = "init";
};

/// Differentiable surrogate of a search strategy on normalized parameters.
/// The probe head emits 16 logits of the conditional hit probabilities; the
/// spiral head emits a success logit and a softplus duration scaled by
/// `tau_scale`.
struct ShadowModel {
  StrategyKind kind = StrategyKind::Probe;
  ShadowHead head = ShadowHead::Mlp;  // resolved, never Auto
  ParamBounds bounds;
  /// Affine layers as (W, b) pairs; the last pair is the output head. The
  /// pointwise head appends a 1x1 log(rho) tensor.
  std::vector<ad::Tensor> weights;
  double tau_scale = 10.0;  // s
  TrainingMeta meta;

  int input_dim() const { return param_dim(kind); }
  int output_dim() const { return kind == StrategyKind::Probe ? kProbePoints : 2; }
  /// Input and output width of the network itself.
  int network_input_dim() const { return head == ShadowHead::Pointwise ? 2 : input_dim(); }
  int network_output_dim() const { return head == ShadowHead::Pointwise ? 1 : output_dim(); }
  std::size_t layer_count() const { return weights.size() / 2; }
  std::size_t parameter_count() const;
};

ShadowModel make_shadow_model(StrategyKind kind, const ParamBounds& bounds, std::uint64_t seed,
                              ShadowArchitecture arch = {});

/// 32 x 120 matrix whose columns select x_j - x_k (axis 0) or y_j - y_k
/// (axis 1) for the touch-point pairs j < k.
const ad::Tensor& probe_pair_difference(int axis);

/// Graph outputs for a batch: probe logits (B x 16), or spiral success logit
/// and tau_search (each B x 1).
struct OutcomeVars {
  StrategyKind kind = StrategyKind::Probe;
  ad::Var logits;
  ad::Var tau;
};

/// Puts the weights on the tape, as leaves (training) or constants (inversion).
std::vector<ad::Var> bind_weights(ad::Tape& tape, const ShadowModel& model, bool trainable);

/// Forward pass on inputs already normalized to [-1, 1].
OutcomeVars forward_normalized(const ShadowModel& model, std::span<const ad::Var> weights, ad::Var inputs);
/// Forward pass on raw parameters; normalization is part of the graph.
OutcomeVars forward(const ShadowModel& model, std::span<const ad::Var> weights, ad::Var raw_inputs);

/// Differentiable P(fail) per row (B x 1).
ad::Var fail_probability(const OutcomeVars& out);
/// Differentiable expected cycle time per row (B x 1).
ad::Var expected_cycle(const OutcomeVars& out, const TimingConfig& timing);

/// Plain evaluation; parameters outside the bounds are clamped (warning on stderr).
OutcomeStats predict(const ShadowModel& model, const StrategyParams& x);
OutcomeStats stats_from(const OutcomeVars& out, Eigen::Index row);

/// Supervision tensors for a batch of records.
struct TrainingBatch {
  ad::Tensor inputs;  // normalized, B x D
  ad::Tensor labels;  // probe: hit flags B x 16; spiral: (success, duration) B x 2
  ad::Tensor mask;    // probe: probed flags B x 16; spiral unused
};

TrainingBatch make_batch(const ShadowModel& model, std::span<const ExecutionRecord* const> records);
TrainingBatch make_batch(const ShadowModel& model, std::span<const ExecutionRecord> records);

inline constexpr double kDefaultLambdaTau = 0.1;

/// Probe: BCE summed over probed indices; spiral: BCE on success plus
/// lambda_tau * (tau - duration)^2 on successful records. Mean over the batch.
ad::Var training_loss(const ShadowModel& model, std::span<const ad::Var> weights, const TrainingBatch& batch,
                      double lambda_tau = kDefaultLambdaTau);
double training_loss(const ShadowModel& model, std::span<const ExecutionRecord> records,
                     double lambda_tau = kDefaultLambdaTau);

}  // namespace dpse
