#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "dpse/rng.hpp"

namespace dpse {

/// One realization of the hole position in the XY-plane (mm).
struct HolePose {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

struct GaussianComponent {
  double weight = 1.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
};

/// Bivariate Gaussian mixture over hole positions (mm, mm^2).
struct GaussianMixture2D {
  std::vector<GaussianComponent> components;

  /// Throws ContractError unless weights sum to 1 and every covariance is SPD.
  void validate() const;
  std::size_t size() const { return components.size(); }

  Eigen::Vector2d mean() const;
  Eigen::Matrix2d covariance() const;
  GaussianMixture2D translated(const Eigen::Vector2d& offset) const;
};

/// Bounds for random task generation.
struct MixtureConfig {
  int min_components = 2;
  int max_components = 4;
  Eigen::Vector2d mean_lower{-5.0, -5.0};
  Eigen::Vector2d mean_upper{5.0, 5.0};
  /// Covariance eigenvalue range (mm^2); eigenvalues are drawn log-uniform.
  double eigen_lower = 0.09;
  double eigen_upper = 1.0;

  void validate() const;
};

GaussianMixture2D sample_mixture(std::uint64_t seed, const MixtureConfig& cfg);

/// Draws a component by weight, then a bivariate normal sample from it.
HolePose sample_from(const GaussianMixture2D& mixture, Rng& rng);

template <typename Scalar>
Scalar log_normal_density(const GaussianComponent& c, const Eigen::Matrix<Scalar, 2, 1>& point) {
  Eigen::Matrix<Scalar, 2, 1> d = point - c.mean.cast<Scalar>();
  Eigen::Matrix<Scalar, 2, 2> cov = c.covariance.cast<Scalar>();
  Scalar det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  Scalar quad = (cov(1, 1) * d(0) * d(0) - Scalar(2) * cov(0, 1) * d(0) * d(1) + cov(0, 0) * d(1) * d(1)) / det;
  using std::log;
  return -log(Scalar(2) * Scalar(std::numbers::pi)) - Scalar(0.5) * log(det) - Scalar(0.5) * quad;
}

/// log sum_i w_i N(point; mu_i, Sigma_i), evaluated with log-sum-exp.
template <typename Scalar>
Scalar log_density(const GaussianMixture2D& mixture, const Eigen::Matrix<Scalar, 2, 1>& point) {
  using std::exp;
  using std::log;
  std::vector<Scalar> terms;
  terms.reserve(mixture.size());
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (const auto& c : mixture.components) {
    if (c.weight <= 0.0) continue;
    Scalar t = log(Scalar(c.weight)) + log_normal_density(c, point);
    terms.push_back(t);
    if (t > peak) peak = t;
  }
  Scalar acc(0);
  for (const Scalar& t : terms) acc += exp(t - peak);
  return peak + log(acc);
}

}  // namespace dpse
