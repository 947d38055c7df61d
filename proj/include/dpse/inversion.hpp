#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpse/adgraph.hpp"
#include "dpse/shadow.hpp"
#include "json.hpp"

namespace dpse {

enum class Regularizer { None, Init, CDist };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& name);

/// alpha_cycle * L_cycle + alpha_fail * L_fail + regularizer.
struct Objective {
  double alpha_cycle = 0.02;  // 1/s
  double alpha_fail = 1.0;
  Regularizer regularizer = Regularizer::None;
  double lambda_init = 0.05;
  double lambda_cdist = 0.5;
  double d_target = 2.0;  // mm
  double tau = 0.1;       // mm, smooth-min temperature
  /// Reference for L_init; defaults to the inversion's starting point.
  std::optional<StrategyParams> reference;

  void validate() const;
};

struct InversionConfig {
  int steps = 400;
  double learning_rate = 0.01;  // in normalized coordinates
  int restarts = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct InversionResult {
  StrategyParams params;
  std::vector<double> loss_trace;  // total loss of the chosen restart per step
  int restart = 0;
  double predicted_fail = 0.0;
  double predicted_cycle = 0.0;
  double total_loss = 0.0;
  std::vector<double> restart_losses;  // final total loss of every restart
};

/// ||u - u0||_1 per row, u in normalized coordinates (B x 1).
ad::Var reg_init(ad::Var normalized, ad::Var reference);
double reg_init(const StrategyParams& x, const StrategyParams& reference, const ParamBounds& bounds);

/// max(0, d_target - smoothmin_{j<k} ||p_j - p_k||) per row of raw probe
/// parameters (B x 32 -> B x 1). ContractError for non-probe widths.
ad::Var reg_cdist(ad::Var raw_probe_params, double d_target, double tau);
double reg_cdist(const StrategyParams& x, double d_target, double tau);
/// Smallest smooth-min pairwise distance of a probe pattern.
double smooth_min_distance(const StrategyParams& x, double tau);

/// Gradient descent in the shadow model's input space: restart 0 starts at
/// x_init, the others uniformly within bounds. Each restart keeps its best
/// iterate; the restart with the lowest total loss is returned.
InversionResult invert(const ShadowModel& model, const StrategyParams& x_init, const Objective& objective,
                       const InversionConfig& cfg, const TimingConfig& timing);

/// Total loss, fail and cycle predicted for a parameter vector.
struct PredictedLoss {
  double total = 0.0;
  double fail = 0.0;
  double cycle = 0.0;
};
PredictedLoss predicted_loss(const ShadowModel& model, const StrategyParams& x, const Objective& objective,
                             const StrategyParams& reference, const TimingConfig& timing);

struct ParetoEntry {
  double alpha_cycle = 0.0;
  double alpha_fail = 0.0;
  InversionResult result;
};

/// One inversion per weighting; dominated entries in (fail, cycle) are
/// dropped and the rest sorted by predicted fail.
std::vector<ParetoEntry> pareto_report(const ShadowModel& model, const StrategyParams& x_init,
                                       const std::vector<std::pair<double, double>>& weightings,
                                       const Objective& base, const InversionConfig& cfg,
                                       const TimingConfig& timing);

nlohmann::json to_json(const InversionResult& result);
nlohmann::json to_json(const Objective& objective);
Objective objective_from_json(const nlohmann::json& j, Objective defaults = {});
nlohmann::json to_json(const InversionConfig& cfg);
InversionConfig inversion_config_from_json(const nlohmann::json& j, InversionConfig defaults = {});

}  // namespace dpse
