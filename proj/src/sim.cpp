#include "dpse/sim.hpp"

#include <algorithm>

#include "dpse/errors.hpp"

namespace dpse {
namespace {

thread_local std::uint64_t g_executions = 0;

ExecutionRecord probe_core(const ProbeParams& params, const HolePose& hole, const SearchRegion& region,
                           const TimingConfig& timing) {
  ExecutionRecord rec;
  rec.params = params.to_params();
  rec.hole = hole;
  for (int k = 0; k < kProbePoints; ++k) {
    rec.probes[k].probed = true;
    if ((params.points[k] - hole.position).norm() <= region.hole_clearance) {
      rec.probes[k].hit = true;
      rec.success = true;
      rec.success_index = k + 1;
      rec.duration = timing.t_setup + (k + 1) * timing.t_probe;
      return rec;
    }
  }
  rec.duration = timing.t_setup + kProbePoints * timing.t_probe + timing.t_fail;
  return rec;
}

ExecutionRecord spiral_core(const SpiralPath& path, const HolePose& hole, const SearchRegion& region,
                            const TimingConfig& timing) {
  const SpiralParams& p = path.params();
  ExecutionRecord rec;
  rec.params = p.to_params();
  rec.hole = hole;
  const MotionProfile profile{path.length(), p.velocity, p.acceleration};
  if (auto idx = path.first_contact(hole.position, region.hole_clearance)) {
    rec.success = true;
    rec.contact_parameter = path.theta()[*idx];
    rec.duration = timing.t_setup + profile.time_at(path.arc_length()[*idx]);
  } else {
    rec.duration = timing.t_setup + profile.total_time() + timing.t_fail;
  }
  return rec;
}

}  // namespace

std::string to_string(StrategyKind kind) { return kind == StrategyKind::Probe ? "probe" : "spiral"; }

StrategyKind strategy_kind_from_string(const std::string& name) {
  if (name == "probe") return StrategyKind::Probe;
  if (name == "spiral") return StrategyKind::Spiral;
  throw ConfigError("unknown strategy kind '" + name + "'");
}

void SearchRegion::validate() const {
  if (!(half_extent > 0.0)) throw ConfigError("search region half_extent must be > 0");
  if (!(hole_clearance > 0.0 && hole_clearance < half_extent))
    throw ConfigError("hole_clearance must lie in (0, half_extent)");
}

void TimingConfig::validate() const {
  if (!(t_setup >= 0.0 && t_probe > 0.0 && t_fail >= 0.0)) throw ConfigError("invalid timing constants");
}

StrategyParams SpiralParams::to_params() const {
  StrategyParams p{StrategyKind::Spiral, Eigen::VectorXd(kSpiralDim)};
  p.values << center(0), center(1), orientation, extent_a, extent_b, windings, velocity, acceleration;
  return p;
}

SpiralParams SpiralParams::from_params(const StrategyParams& p) {
  if (p.kind != StrategyKind::Spiral || p.values.size() != kSpiralDim)
    throw ContractError("expected an 8-dimensional spiral parameter vector");
  const auto& v = p.values;
  return SpiralParams{{v(0), v(1)}, v(2), v(3), v(4), v(5), v(6), v(7)};
}

StrategyParams ProbeParams::to_params() const {
  StrategyParams p{StrategyKind::Probe, Eigen::VectorXd(kProbeDim)};
  for (int k = 0; k < kProbePoints; ++k) p.values.segment<2>(2 * k) = points[k];
  return p;
}

ProbeParams ProbeParams::from_params(const StrategyParams& p) {
  if (p.kind != StrategyKind::Probe || p.values.size() != kProbeDim)
    throw ContractError("expected a 32-dimensional probe parameter vector");
  ProbeParams out;
  for (int k = 0; k < kProbePoints; ++k) out.points[k] = p.values.segment<2>(2 * k);
  return out;
}

bool ParamBounds::contains(const Eigen::VectorXd& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Eigen::VectorXd ParamBounds::clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

Eigen::VectorXd ParamBounds::normalize(const Eigen::VectorXd& x) const {
  return (2.0 * (x - lower).array() / (upper - lower).array() - 1.0).matrix();
}

Eigen::VectorXd ParamBounds::denormalize(const Eigen::VectorXd& u) const {
  Eigen::VectorXd x = (lower.array() + (u.array() + 1.0) * 0.5 * (upper - lower).array()).matrix();
  return clamp(x);
}

Eigen::VectorXd ParamBounds::sample_uniform(Rng& rng) const {
  Eigen::VectorXd x(lower.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lower(i), upper(i));
  return x;
}

ParamBounds parameter_bounds(StrategyKind kind, const SearchRegion& region) {
  const double h = region.half_extent;
  ParamBounds b;
  if (kind == StrategyKind::Probe) {
    b.lower = Eigen::VectorXd::Constant(kProbeDim, -h);
    b.upper = Eigen::VectorXd::Constant(kProbeDim, h);
  } else {
    b.lower = Eigen::VectorXd(kSpiralDim);
    b.upper = Eigen::VectorXd(kSpiralDim);
    b.lower << -h, -h, 0.0, 0.05 * h, 0.05 * h, 1.0, 5.0, 50.0;
    b.upper << h, h, std::numbers::pi, h, h, 16.0, 50.0, 500.0;
  }
  return b;
}

bool record_is_consistent(const ExecutionRecord& r) {
  if (!(r.duration > 0.0)) return false;
  if (r.params.kind == StrategyKind::Spiral) return r.success == r.contact_parameter.has_value();
  int first_hit = -1;
  for (int k = 0; k < kProbePoints; ++k) {
    const auto& o = r.probes[k];
    if (o.hit && !o.probed) return false;
    if (first_hit >= 0) {
      if (o.probed || o.hit) return false;
    } else if (o.hit) {
      first_hit = k;
    } else if (!o.probed) {
      return false;  // failed search probes every point
    }
  }
  if (r.success != (first_hit >= 0)) return false;
  if (r.success) return r.success_index && *r.success_index == first_hit + 1;
  return !r.success_index.has_value();
}

SpiralPath::SpiralPath(const SpiralParams& params, double max_step) : params_(params) {
  if (!(params.extent_a > 0 && params.extent_b > 0 && params.windings > 0 && params.velocity > 0 &&
        params.acceleration > 0))
    throw ContractError("spiral extents, windings, velocity and acceleration must be positive");
  const double theta_end = 2.0 * std::numbers::pi * params.windings;
  const double radial = std::max(params.extent_a, params.extent_b) / theta_end;
  double theta = 0.0;
  points_.push_back(spiral_point(params, 0.0));
  theta_.push_back(0.0);
  arc_.push_back(0.0);
  while (theta < theta_end) {
    // |dq/dtheta| <= radial * sqrt(1 + theta^2); bound evaluated at the far end of the step.
    double step = max_step / (radial * std::sqrt(1.0 + theta * theta));
    step = max_step / (radial * std::sqrt(1.0 + (theta + step) * (theta + step)));
    theta = std::min(theta + step, theta_end);
    Eigen::Vector2d q = spiral_point(params, theta);
    arc_.push_back(arc_.back() + (q - points_.back()).norm());
    points_.push_back(q);
    theta_.push_back(theta);
  }
}

std::optional<std::size_t> SpiralPath::first_contact(const Eigen::Vector2d& hole, double clearance) const {
  const Eigen::Vector2d d = hole - params_.center;
  const double c = std::cos(params_.orientation), s = std::sin(params_.orientation);
  const double lx = c * d(0) + s * d(1);
  const double ly = -s * d(0) + c * d(1);
  const double ea = params_.extent_a + clearance, eb = params_.extent_b + clearance;
  if ((lx * lx) / (ea * ea) + (ly * ly) / (eb * eb) > 1.0) return std::nullopt;
  const double c2 = clearance * clearance;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if ((points_[i] - hole).squaredNorm() <= c2) return i;
  }
  return std::nullopt;
}

double MotionProfile::total_time() const { return time_at(length); }

double MotionProfile::time_at(double s) const {
  s = std::clamp(s, 0.0, length);
  double ramp = velocity * velocity / (2.0 * acceleration);
  double peak = velocity;
  if (2.0 * ramp >= length) {  // triangular
    ramp = 0.5 * length;
    peak = std::sqrt(acceleration * length);
  }
  const double t_ramp = peak / acceleration;
  const double cruise = length - 2.0 * ramp;
  const double total = 2.0 * t_ramp + cruise / peak;
  if (s <= ramp) return std::sqrt(2.0 * s / acceleration);
  if (s <= ramp + cruise) return t_ramp + (s - ramp) / peak;
  return total - std::sqrt(2.0 * (length - s) / acceleration);
}

ExecutionRecord simulate_probe(const ProbeParams& params, const HolePose& hole, const SearchRegion& region,
                               const TimingConfig& timing) {
  ++g_executions;
  return probe_core(params, hole, region, timing);
}

ExecutionRecord simulate_spiral(const SpiralParams& params, const HolePose& hole, const SearchRegion& region,
                                const TimingConfig& timing) {
  return simulate_spiral(SpiralPath(params, region.hole_clearance / 4.0), hole, region, timing);
}

ExecutionRecord simulate_spiral(const SpiralPath& path, const HolePose& hole, const SearchRegion& region,
                                const TimingConfig& timing) {
  ++g_executions;
  return spiral_core(path, hole, region, timing);
}

ExecutionRecord simulate(const StrategyParams& params, const HolePose& hole, const SearchRegion& region,
                         const TimingConfig& timing) {
  if (params.kind == StrategyKind::Probe) return simulate_probe(ProbeParams::from_params(params), hole, region, timing);
  return simulate_spiral(SpiralParams::from_params(params), hole, region, timing);
}

std::uint64_t executions_charged() { return g_executions; }

OracleEstimate success_prob_oracle(const StrategyParams& params, const GaussianMixture2D& mixture, int n_samples,
                                   std::uint64_t seed, const SearchRegion& region, const TimingConfig& timing) {
  if (n_samples < 1) throw ContractError("oracle needs n_samples >= 1");
  Rng rng(seed, 0x6f7261636c65ull);
  std::size_t successes = 0;
  double duration = 0.0;
  auto tally = [&](const ExecutionRecord& r) {
    successes += r.success ? 1 : 0;
    duration += r.duration;
  };
  if (params.kind == StrategyKind::Probe) {
    const ProbeParams probe = ProbeParams::from_params(params);
    for (int i = 0; i < n_samples; ++i) tally(probe_core(probe, sample_from(mixture, rng), region, timing));
  } else {
    const SpiralPath path(SpiralParams::from_params(params), region.hole_clearance / 4.0);
    for (int i = 0; i < n_samples; ++i) tally(spiral_core(path, sample_from(mixture, rng), region, timing));
  }
  return {static_cast<double>(successes) / n_samples, duration / n_samples, n_samples};
}

ParamsSampler ParamsSampler::uniform(StrategyKind kind, ParamBounds bounds, std::uint64_t seed) {
  ParamsSampler s;
  s.kind_ = kind;
  s.bounds_ = std::move(bounds);
  s.rng_ = Rng(seed, 0x706172616d73ull);
  return s;
}

ParamsSampler ParamsSampler::fixed(StrategyParams params) {
  ParamsSampler s;
  s.kind_ = params.kind;
  s.fixed_ = std::move(params);
  return s;
}

StrategyParams ParamsSampler::next() {
  if (fixed_) return *fixed_;
  return StrategyParams{kind_, bounds_.sample_uniform(rng_)};
}

TaskDataset collect_task_dataset(HoleProcess& process, ParamsSampler& sampler, int n, const SearchRegion& region,
                                 const TimingConfig& timing) {
  if (n < 1) throw ConfigError("collect_task_dataset needs n >= 1");
  TaskDataset ds;
  ds.kind = sampler.kind();
  ds.mixture = process.base();
  ds.records.reserve(n);
  std::optional<SpiralPath> cached;  // passive spiral collection reuses one path
  for (int i = 0; i < n; ++i) {
    StrategyParams params = sampler.next();
    HolePose hole = process.sample_hole();
    if (params.kind == StrategyKind::Spiral) {
      if (!cached || !sampler.is_fixed()) cached.emplace(SpiralParams::from_params(params), region.hole_clearance / 4.0);
      ds.records.push_back(simulate_spiral(*cached, hole, region, timing));
    } else {
      ds.records.push_back(simulate(params, hole, region, timing));
    }
    process.advance();
  }
  return ds;
}

}  // namespace dpse
