#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpse/inversion.hpp"
#include "dpse/mixture.hpp"
#include "dpse/sim.hpp"
#include "json.hpp"

namespace dpse {

/// Probe: 4x4 axis-aligned grid spanning the region with margin = clearance.
/// Spiral: centered, a = b = 0.9 half-extent, 8 windings, nominal v/acc.
StrategyParams baseline_fixed(StrategyKind kind, const SearchRegion& region);

/// Oriented-ellipse spiral fitted to hole positions: center = mean,
/// orientation = first principal axis, extents 2.5 sqrt(eigenvalues) clamped,
/// windings so that the pitch along the major axis is <= 2 clearance.
/// DegenerateInputError for < 2 points or a zero covariance.
SpiralParams baseline_pca_spiral(std::span<const HolePose> holes, const SearchRegion& region);

struct GmmConfig {
  int components = 16;
  int max_iterations = 100;
  double tolerance = 1e-6;      // on the mean log-likelihood
  double covariance_floor = 1e-3;  // mm^2, minimum eigenvalue
  std::uint64_t seed = 1;
};

struct GmmFit {
  GaussianMixture2D mixture;
  std::vector<double> log_likelihood;  // mean log-likelihood after each E-step
  int iterations = 0;
};

/// EM with k-means++ initialization; the constrained M-step clips covariance
/// eigenvalues at the floor. Throws NumericError if the log-likelihood decreases.
GmmFit fit_gmm(const Eigen::Matrix<double, Eigen::Dynamic, 2>& points, const GmmConfig& cfg);

/// Hole positions of the successful records.
Eigen::Matrix<double, Eigen::Dynamic, 2> successful_contacts(std::span<const ExecutionRecord> records);

/// 16 GMM means fitted to the contacts of successful probe records, ordered
/// by component weight, clamped to bounds. InsufficientDataError below 16 successes.
ProbeParams baseline_gmm_probe(std::span<const ExecutionRecord> records, const SearchRegion& region,
                               const GmmConfig& cfg = {});

struct Nsga2Config {
  int mu = 30;
  int lambda = 30;
  int budget = 300;  // simulator executions
  int evals_per_individual = 8;
  double eta_crossover = 15.0;
  double eta_mutation = 20.0;
  double p_crossover = 0.9;
  std::optional<double> p_mutation;  // defaults to 1 / dim
  double alpha_cycle = 0.02;
  double alpha_fail = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
  static Nsga2Config spiral_preset();
  static Nsga2Config probe_preset();
};

nlohmann::json to_json(const Nsga2Config& cfg);
Nsga2Config nsga2_config_from_json(const nlohmann::json& j, Nsga2Config defaults = {});

struct Individual {
  StrategyParams params;
  double fail = 0.0;
  double cycle = 0.0;
  int rank = 0;
  double crowding = 0.0;
  std::uint64_t id = 0;

  double scalarized(double alpha_cycle, double alpha_fail) const { return alpha_cycle * cycle + alpha_fail * fail; }
};

/// Pareto rank (0 = non-dominated) of each (fail, cycle) pair, minimization.
std::vector<int> non_dominated_sort(std::span<const Eigen::Vector2d> objectives);
/// Crowding distance of the members of one front; extremes get +infinity.
std::vector<double> crowding_distance(std::span<const Eigen::Vector2d> objectives, std::span<const int> front);

struct Nsga2Result {
  Individual best;
  std::vector<Individual> front;
  std::vector<Individual> population;
  std::vector<double> best_trace;  // best scalarized objective after each generation
  std::uint64_t executions = 0;
  int generations = 0;
};

/// mu+lambda NSGA-II with SBX and polynomial mutation; each individual is
/// scored on `evals_per_individual` charged executions against `mixture`.
Nsga2Result nsga2_optimize(StrategyKind kind, const GaussianMixture2D& mixture, const Nsga2Config& cfg,
                           const SearchRegion& region, const TimingConfig& timing);

}  // namespace dpse
