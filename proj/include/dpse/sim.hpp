#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpse/mixture.hpp"
#include "dpse/process.hpp"
#include "dpse/rng.hpp"

namespace dpse {

enum class StrategyKind { Spiral, Probe };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& name);

inline constexpr int kProbePoints = 16;
inline constexpr int kProbeDim = 2 * kProbePoints;
inline constexpr int kSpiralDim = 8;

inline int param_dim(StrategyKind kind) { return kind == StrategyKind::Probe ? kProbeDim : kSpiralDim; }

struct SearchRegion {
  double half_extent = 10.0;     // mm
  double hole_clearance = 0.5;   // mm

  void validate() const;
};

struct TimingConfig {
  double t_setup = 0.5;  // s
  double t_probe = 0.8;  // s per touch
  double t_fail = 1.0;   // s penalty on failure

  void validate() const;
};

/// Parameter vector in raw units, tagged with its strategy.
struct StrategyParams {
  StrategyKind kind = StrategyKind::Probe;
  Eigen::VectorXd values;

  bool operator==(const StrategyParams& other) const {
    return kind == other.kind && values.size() == other.values.size() && values == other.values;
  }
};

/// Elliptical Archimedean spiral; layout of the 8-dim vector follows field order.
struct SpiralParams {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double orientation = 0.0;  // rad
  double extent_a = 9.0;     // mm, semi-axis along the rotated x axis
  double extent_b = 9.0;     // mm
  double windings = 8.0;
  double velocity = 20.0;       // mm/s
  double acceleration = 200.0;  // mm/s^2

  StrategyParams to_params() const;
  static SpiralParams from_params(const StrategyParams& p);
};

/// 16 touch points, probed in order; vector layout (x1, y1, ..., x16, y16).
struct ProbeParams {
  std::array<Eigen::Vector2d, kProbePoints> points{};

  StrategyParams to_params() const;
  static ProbeParams from_params(const StrategyParams& p);
};

struct ParamBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
  /// Affine map of [lower, upper] onto [-1, 1].
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& u) const;
  Eigen::VectorXd sample_uniform(Rng& rng) const;
};

inline constexpr double kNominalVelocity = 20.0;
inline constexpr double kNominalAcceleration = 200.0;

ParamBounds parameter_bounds(StrategyKind kind, const SearchRegion& region);

struct ProbeOutcome {
  bool probed = false;
  bool hit = false;
  bool operator==(const ProbeOutcome&) const = default;
};

struct ExecutionRecord {
  StrategyParams params;
  HolePose hole;
  bool success = false;
  std::optional<int> success_index;          // probe: 1-based index of the hitting touch point
  std::optional<double> contact_parameter;   // spiral: theta* of first contact
  double duration = 0.0;                     // s
  std::array<ProbeOutcome, kProbePoints> probes{};  // probe only
};

/// Checks the per-probe outcome chain and success consistency.
bool record_is_consistent(const ExecutionRecord& record);

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> spiral_point(const SpiralParams& p, Scalar theta) {
  using std::cos;
  using std::sin;
  const Scalar scale = theta / Scalar(2.0 * std::numbers::pi * p.windings);
  const Scalar lx = Scalar(p.extent_a) * scale * cos(theta);
  const Scalar ly = Scalar(p.extent_b) * scale * sin(theta);
  const Scalar c = Scalar(std::cos(p.orientation));
  const Scalar s = Scalar(std::sin(p.orientation));
  return {Scalar(p.center(0)) + c * lx - s * ly, Scalar(p.center(1)) + s * lx + c * ly};
}

/// Discretized spiral with cumulative arc length; chord length <= max_step.
class SpiralPath {
 public:
  SpiralPath(const SpiralParams& params, double max_step);

  const std::vector<Eigen::Vector2d>& points() const { return points_; }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<double>& arc_length() const { return arc_; }
  double length() const { return arc_.back(); }
  const SpiralParams& params() const { return params_; }

  /// Index of the first path point within `clearance` of `hole`.
  std::optional<std::size_t> first_contact(const Eigen::Vector2d& hole, double clearance) const;

 private:
  SpiralParams params_;
  std::vector<Eigen::Vector2d> points_;
  std::vector<double> theta_;
  std::vector<double> arc_;
};

/// Trapezoidal point-to-point velocity profile over a path of given length.
struct MotionProfile {
  double length;
  double velocity;
  double acceleration;

  double total_time() const;
  /// Time at which arc position s is reached.
  double time_at(double s) const;
};

ExecutionRecord simulate_probe(const ProbeParams& params, const HolePose& hole, const SearchRegion& region,
                               const TimingConfig& timing);
ExecutionRecord simulate_spiral(const SpiralParams& params, const HolePose& hole, const SearchRegion& region,
                                const TimingConfig& timing);
/// Same as simulate_spiral with a precomputed path.
ExecutionRecord simulate_spiral(const SpiralPath& path, const HolePose& hole, const SearchRegion& region,
                                const TimingConfig& timing);
ExecutionRecord simulate(const StrategyParams& params, const HolePose& hole, const SearchRegion& region,
                         const TimingConfig& timing);

/// Thread-local count of simulate_* calls; the oracle does not contribute.
std::uint64_t executions_charged();

/// Counts executions charged in the current thread during its lifetime.
class ExecutionTally {
 public:
  ExecutionTally() : start_(executions_charged()) {}
  std::uint64_t count() const { return executions_charged() - start_; }

 private:
  std::uint64_t start_;
};

struct OracleEstimate {
  double success_rate = 0.0;
  double mean_duration = 0.0;
  int samples = 0;
};

/// Monte-Carlo ground truth; never charged to any method's execution budget.
OracleEstimate success_prob_oracle(const StrategyParams& params, const GaussianMixture2D& mixture, int n_samples,
                                   std::uint64_t seed, const SearchRegion& region, const TimingConfig& timing);

/// Parameters used for data collection: uniform over bounds (pretraining)
/// or one fixed vector repeated (passive collection).
class ParamsSampler {
 public:
  static ParamsSampler uniform(StrategyKind kind, ParamBounds bounds, std::uint64_t seed);
  static ParamsSampler fixed(StrategyParams params);

  StrategyParams next();
  StrategyKind kind() const { return kind_; }
  bool is_fixed() const { return fixed_.has_value(); }

 private:
  StrategyKind kind_ = StrategyKind::Probe;
  ParamBounds bounds_;
  Rng rng_;
  std::optional<StrategyParams> fixed_;
};

struct TaskDataset {
  StrategyKind kind = StrategyKind::Probe;
  GaussianMixture2D mixture;  // the task's (base) hole distribution
  std::vector<ExecutionRecord> records;
};

/// Executes n times against the process, advancing it once per execution.
TaskDataset collect_task_dataset(HoleProcess& process, ParamsSampler& sampler, int n, const SearchRegion& region,
                                 const TimingConfig& timing);

}  // namespace dpse
