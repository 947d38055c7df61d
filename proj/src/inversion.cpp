#include "dpse/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dpse/errors.hpp"

namespace dpse {
namespace {

constexpr int kPairs = kProbePoints * (kProbePoints - 1) / 2;

ad::Var denormalize(ad::Var u, const ParamBounds& bounds) {
  ad::Tape& tape = *u.tape();
  const Eigen::RowVectorXd half = (0.5 * (bounds.upper - bounds.lower)).transpose();
  const Eigen::RowVectorXd mid = (0.5 * (bounds.upper + bounds.lower)).transpose();
  return u * tape.constant(half.replicate(u.rows(), 1)) + tape.constant(mid.replicate(u.rows(), 1));
}

struct RowLosses {
  ad::Var total;
  ad::Var fail;
  ad::Var cycle;
};

RowLosses objective_rows(const ShadowModel& model, std::span<const ad::Var> w, ad::Var u, ad::Var u_ref,
                         const Objective& obj, const TimingConfig& timing) {
  OutcomeVars out = forward_normalized(model, w, u);
  RowLosses r;
  r.fail = fail_probability(out);
  r.cycle = expected_cycle(out, timing);
  r.total = obj.alpha_fail * r.fail + obj.alpha_cycle * r.cycle;
  if (obj.regularizer == Regularizer::Init) r.total = r.total + obj.lambda_init * reg_init(u, u_ref);
  if (obj.regularizer == Regularizer::CDist)
    r.total = r.total + obj.lambda_cdist * reg_cdist(denormalize(u, model.bounds), obj.d_target, obj.tau);
  return r;
}

}  // namespace

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::None: return "none";
    case Regularizer::Init: return "init";
    case Regularizer::CDist: return "cdist";
  }
  return "none";
}

Regularizer regularizer_from_string(const std::string& name) {
  if (name == "none") return Regularizer::None;
  if (name == "init") return Regularizer::Init;
  if (name == "cdist") return Regularizer::CDist;
  throw ConfigError("unknown regularizer '" + name + "'");
}

void Objective::validate() const {
  if (!(alpha_cycle >= 0.0 && alpha_fail >= 0.0)) throw ConfigError("objective weights must be >= 0");
  if (!(alpha_cycle > 0.0 || alpha_fail > 0.0)) throw ConfigError("objective needs alpha_cycle > 0 or alpha_fail > 0");
  if (!(lambda_init >= 0.0 && lambda_cdist >= 0.0)) throw ConfigError("regularizer weights must be >= 0");
  if (!(d_target >= 0.0 && tau > 0.0)) throw ConfigError("cdist needs d_target >= 0 and tau > 0");
}

void InversionConfig::validate() const {
  if (steps < 0) throw ConfigError("inversion steps must be >= 0");
  if (restarts < 1) throw ConfigError("inversion needs at least one restart");
  if (!(learning_rate > 0.0)) throw ConfigError("inversion learning rate must be > 0");
}

ad::Var reg_init(ad::Var normalized, ad::Var reference) { return ad::l1_rows(normalized - reference); }

double reg_init(const StrategyParams& x, const StrategyParams& reference, const ParamBounds& bounds) {
  if (x.values.size() != reference.values.size()) throw ContractError("reg_init: dimension mismatch");
  return (bounds.normalize(x.values) - bounds.normalize(reference.values)).lpNorm<1>();
}

ad::Var reg_cdist(ad::Var raw, double d_target, double tau) {
  if (raw.cols() != kProbeDim) throw ContractError("reg_cdist applies to 16-point probe patterns only");
  ad::Tape& tape = *raw.tape();
  ad::Var dx = ad::matmul(raw, tape.constant(probe_pair_difference(0)));
  ad::Var dy = ad::matmul(raw, tape.constant(probe_pair_difference(1)));
  // The epsilon keeps the gradient of coincident points finite.
  ad::Var dist = ad::sqrt((ad::square(dx) + ad::square(dy)) + 1e-12);
  return ad::clamp_min(d_target - ad::smooth_min_rows(dist, tau), 0.0);
}

double reg_cdist(const StrategyParams& x, double d_target, double tau) {
  if (x.kind != StrategyKind::Probe) throw ContractError("reg_cdist applies to probe parameters only");
  return std::max(0.0, d_target - smooth_min_distance(x, tau));
}

double smooth_min_distance(const StrategyParams& x, double tau) {
  if (x.kind != StrategyKind::Probe) throw ContractError("smooth_min_distance applies to probe parameters only");
  ad::Tape tape;
  ad::Var raw = tape.constant(x.values.transpose());
  ad::Var dx = ad::matmul(raw, tape.constant(probe_pair_difference(0)));
  ad::Var dy = ad::matmul(raw, tape.constant(probe_pair_difference(1)));
  return ad::smooth_min_rows(ad::sqrt((ad::square(dx) + ad::square(dy)) + 1e-12), tau).scalar();
}

PredictedLoss predicted_loss(const ShadowModel& model, const StrategyParams& x, const Objective& obj,
                             const StrategyParams& reference, const TimingConfig& timing) {
  ad::Tape tape;
  auto w = bind_weights(tape, model, false);
  ad::Var u = tape.constant(model.bounds.normalize(model.bounds.clamp(x.values)).transpose());
  ad::Var u_ref = tape.constant(model.bounds.normalize(reference.values).transpose());
  RowLosses r = objective_rows(model, w, u, u_ref, obj, timing);
  return {r.total.scalar(), r.fail.scalar(), r.cycle.scalar()};
}

InversionResult invert(const ShadowModel& model, const StrategyParams& x_init, const Objective& objective,
                       const InversionConfig& cfg, const TimingConfig& timing) {
  objective.validate();
  cfg.validate();
  if (x_init.kind != model.kind || x_init.values.size() != model.input_dim())
    throw ContractError("invert: initial parameters do not match the shadow model's strategy");
  if (objective.regularizer == Regularizer::CDist && model.kind != StrategyKind::Probe)
    throw ContractError("cdist regularizer applies to probe search only");
  const StrategyParams& reference = objective.reference ? *objective.reference : x_init;
  if (reference.values.size() != model.input_dim()) throw ContractError("invert: reference dimension mismatch");

  const int dim = model.input_dim();
  const int rows = cfg.steps == 0 ? 1 : cfg.restarts;
  ad::Tensor u(rows, dim);
  u.row(0) = model.bounds.normalize(model.bounds.clamp(x_init.values)).transpose();
  Rng rng(cfg.seed, 0x696e76ull);
  for (int r = 1; r < rows; ++r)
    for (int d = 0; d < dim; ++d) u(r, d) = rng.uniform(-1.0, 1.0);
  const ad::Tensor u_ref = model.bounds.normalize(reference.values).transpose().replicate(rows, 1);

  ad::Tensor best_u = u;
  Eigen::VectorXd best_total = Eigen::VectorXd::Constant(rows, std::numeric_limits<double>::infinity());
  Eigen::VectorXd best_fail(rows), best_cycle(rows);
  std::vector<std::vector<double>> traces(rows);
  ad::AdamState adam;
  const ad::AdamConfig adam_cfg{cfg.learning_rate};

  for (int step = 0; step <= cfg.steps; ++step) {
    ad::Tape tape;
    auto w = bind_weights(tape, model, false);
    ad::Var uv = tape.leaf(u);
    RowLosses losses = objective_rows(model, w, uv, tape.constant(u_ref), objective, timing);
    const ad::Tensor& total = losses.total.value();
    for (int r = 0; r < rows; ++r) {
      traces[r].push_back(total(r, 0));
      if (total(r, 0) < best_total(r)) {
        best_total(r) = total(r, 0);
        best_fail(r) = losses.fail.value()(r, 0);
        best_cycle(r) = losses.cycle.value()(r, 0);
        best_u.row(r) = u.row(r);
      }
    }
    if (step == cfg.steps) break;
    tape.backward(ad::sum(losses.total));
    ad::Tensor g = tape.grad(uv);
    std::array<ad::Tensor, 1> params{u};
    std::array<ad::Tensor, 1> grads{g};
    ad::adam_step(params, grads, adam, adam_cfg);
    u = params[0].cwiseMax(-1.0).cwiseMin(1.0);
  }

  int chosen = 0;
  for (int r = 1; r < rows; ++r)
    if (best_total(r) < best_total(chosen)) chosen = r;

  InversionResult res;
  res.params = StrategyParams{model.kind, model.bounds.denormalize(best_u.row(chosen).transpose())};
  if (chosen == 0 && best_u.row(0) == u_ref.row(0) && !objective.reference) res.params = x_init;
  res.loss_trace = traces[chosen];
  res.restart = chosen;
  res.predicted_fail = best_fail(chosen);
  res.predicted_cycle = best_cycle(chosen);
  res.total_loss = best_total(chosen);
  res.restart_losses.assign(best_total.data(), best_total.data() + rows);
  if (!std::isfinite(res.total_loss))
    throw NumericError(fmt::format("inversion produced a non-finite loss (restart {})", chosen));
  return res;
}

std::vector<ParetoEntry> pareto_report(const ShadowModel& model, const StrategyParams& x_init,
                                       const std::vector<std::pair<double, double>>& weightings,
                                       const Objective& base, const InversionConfig& cfg,
                                       const TimingConfig& timing) {
  if (weightings.empty()) throw ConfigError("pareto_report needs at least one weighting");
  std::vector<ParetoEntry> all;
  for (const auto& [alpha_cycle, alpha_fail] : weightings) {
    Objective obj = base;
    obj.alpha_cycle = alpha_cycle;
    obj.alpha_fail = alpha_fail;
    all.push_back({alpha_cycle, alpha_fail, invert(model, x_init, obj, cfg, timing)});
  }
  auto dominates = [](const InversionResult& a, const InversionResult& b) {
    return a.predicted_fail <= b.predicted_fail && a.predicted_cycle <= b.predicted_cycle &&
           (a.predicted_fail < b.predicted_fail || a.predicted_cycle < b.predicted_cycle);
  };
  std::vector<ParetoEntry> front;
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < all.size() && !dominated; ++j) dominated = j != i && dominates(all[j].result, all[i].result);
    if (!dominated) front.push_back(all[i]);
  }
  std::stable_sort(front.begin(), front.end(), [](const ParetoEntry& a, const ParetoEntry& b) {
    return a.result.predicted_fail < b.result.predicted_fail;
  });
  return front;
}

nlohmann::json to_json(const InversionResult& r) {
  std::vector<double> params(r.params.values.data(), r.params.values.data() + r.params.values.size());
  return {{"kind", to_string(r.params.kind)},
          {"params", params},
          {"loss_trace", r.loss_trace},
          {"restart", r.restart},
          {"predicted_fail", r.predicted_fail},
          {"predicted_cycle", r.predicted_cycle},
          {"total_loss", r.total_loss},
          {"restart_losses", r.restart_losses}};
}

nlohmann::json to_json(const Objective& o) {
  return {{"alpha_cycle", o.alpha_cycle}, {"alpha_fail", o.alpha_fail},   {"regularizer", to_string(o.regularizer)},
          {"lambda_init", o.lambda_init}, {"lambda_cdist", o.lambda_cdist}, {"d_target", o.d_target},
          {"tau", o.tau}};
}

Objective objective_from_json(const nlohmann::json& j, Objective o) {
  try {
    o.alpha_cycle = j.value("alpha_cycle", o.alpha_cycle);
    o.alpha_fail = j.value("alpha_fail", o.alpha_fail);
    if (j.contains("regularizer")) o.regularizer = regularizer_from_string(j["regularizer"].get<std::string>());
    o.lambda_init = j.value("lambda_init", o.lambda_init);
    o.lambda_cdist = j.value("lambda_cdist", o.lambda_cdist);
    o.d_target = j.value("d_target", o.d_target);
    o.tau = j.value("tau", o.tau);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed objective: ") + e.what());
  }
  o.validate();
  return o;
}

nlohmann::json to_json(const InversionConfig& c) {
  return {{"steps", c.steps}, {"learning_rate", c.learning_rate}, {"restarts", c.restarts}, {"seed", c.seed}};
}

InversionConfig inversion_config_from_json(const nlohmann::json& j, InversionConfig c) {
  try {
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.restarts = j.value("restarts", c.restarts);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed inversion config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace dpse
