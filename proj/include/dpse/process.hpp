#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "dpse/mixture.hpp"
#include "dpse/rng.hpp"
#include "json.hpp"

namespace dpse {

enum class ProcessKind { Stationary, Drift, Brownian, Shift };

std::string to_string(ProcessKind kind);
ProcessKind process_kind_from_string(const std::string& name);

struct ProcessParams {
  ProcessKind kind = ProcessKind::Stationary;
  Eigen::Vector2d drift{0.05, 0.0};  // mm per step
  double step_stddev = 0.05;         // mm
  double p_shift = 0.05;
  double max_offset = 2.0;  // mm, per coordinate

  void validate() const;
};

/// Hole-pose generating process {H_t}: a base mixture rigidly translated by
/// an offset that evolves per step according to the process kind.
///
/// Hole sampling and process motion use separate Philox streams, so the
/// sequence of distributions does not depend on how many holes were drawn.
class HoleProcess {
 public:
  HoleProcess(GaussianMixture2D base, ProcessParams params, std::uint64_t seed);

  HolePose sample_hole();
  void advance();

  const GaussianMixture2D& current() const { return current_; }
  const GaussianMixture2D& base() const { return base_; }
  const ProcessParams& params() const { return params_; }
  const Eigen::Vector2d& offset() const { return offset_; }
  std::uint64_t timestep() const { return timestep_; }
  std::uint64_t seed() const { return seed_; }
  /// Number of advance() calls that moved the distribution (Shift kind).
  std::uint64_t shift_count() const { return shifts_; }

 private:
  GaussianMixture2D base_;
  GaussianMixture2D current_;
  ProcessParams params_;
  std::uint64_t seed_;
  std::uint64_t timestep_ = 0;
  std::uint64_t shifts_ = 0;
  Eigen::Vector2d offset_ = Eigen::Vector2d::Zero();
  Rng hole_rng_;
  Rng motion_rng_;
};

nlohmann::json to_json(const GaussianMixture2D& mixture);
GaussianMixture2D mixture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MixtureConfig& cfg);
MixtureConfig mixture_config_from_json(const nlohmann::json& j, MixtureConfig defaults = {});
nlohmann::json to_json(const ProcessParams& params);
ProcessParams process_params_from_json(const nlohmann::json& j, ProcessParams defaults = {});

/// {kind, weights, means, covariances, <kind parameters>, seed}
nlohmann::json to_json(const HoleProcess& process);
HoleProcess process_from_json(const nlohmann::json& j);

}  // namespace dpse
