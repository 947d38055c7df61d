#include "dpse/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dpse/errors.hpp"

namespace dpse {

StrategyParams baseline_fixed(StrategyKind kind, const SearchRegion& region) {
  region.validate();
  const double h = region.half_extent;
  if (kind == StrategyKind::Spiral) {
    SpiralParams p;
    p.center.setZero();
    p.orientation = 0.0;
    p.extent_a = p.extent_b = 0.9 * h;
    p.windings = 8.0;
    p.velocity = kNominalVelocity;
    p.acceleration = kNominalAcceleration;
    return p.to_params();
  }
  const double lo = -(h - region.hole_clearance);
  const double spacing = 2.0 * (h - region.hole_clearance) / 3.0;
  ProbeParams p;
  for (int row = 0; row < 4; ++row)
    for (int col = 0; col < 4; ++col) p.points[4 * row + col] = {lo + col * spacing, lo + row * spacing};
  return p.to_params();
}

SpiralParams baseline_pca_spiral(std::span<const HolePose> holes, const SearchRegion& region) {
  region.validate();
  if (holes.size() < 2) throw DegenerateInputError("PCA spiral needs at least two hole positions");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& h : holes) mean += h.position;
  mean /= static_cast<double>(holes.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& h : holes) {
    const Eigen::Vector2d d = h.position - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(holes.size() - 1);
  if (cov.trace() <= 0.0) throw DegenerateInputError("PCA spiral: hole positions have zero covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d major = eig.eigenvectors().col(1);
  double phi = std::atan2(major.y(), major.x());
  if (phi < 0.0) phi += std::numbers::pi;
  if (phi >= std::numbers::pi) phi -= std::numbers::pi;

  const ParamBounds bounds = parameter_bounds(StrategyKind::Spiral, region);
  SpiralParams p;
  p.center = mean;
  p.orientation = phi;
  p.extent_a = 2.5 * std::sqrt(std::max(eig.eigenvalues()(1), 0.0));
  p.extent_b = 2.5 * std::sqrt(std::max(eig.eigenvalues()(0), 0.0));
  p.windings = std::ceil(std::max(p.extent_a, p.extent_b) / (2.0 * region.hole_clearance));
  p.velocity = kNominalVelocity;
  p.acceleration = kNominalAcceleration;
  StrategyParams clamped{StrategyKind::Spiral, bounds.clamp(p.to_params().values)};
  return SpiralParams::from_params(clamped);
}

}  // namespace dpse
