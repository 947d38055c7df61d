#include "dpse/mixture.hpp"

#include <fmt/format.h>

#include "dpse/errors.hpp"

namespace dpse {

void GaussianMixture2D::validate() const {
  if (components.empty()) throw ContractError("mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw ContractError("mixture weights must be nonnegative");
    if (!c.mean.allFinite()) throw ContractError("mixture mean must be finite");
    if (std::abs(c.covariance(0, 1) - c.covariance(1, 0)) > 1e-12 * c.covariance.cwiseAbs().maxCoeff())
      throw ContractError("mixture covariance must be symmetric");
    Eigen::LLT<Eigen::Matrix2d> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw ContractError("mixture covariance must be positive definite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError(fmt::format("mixture weights sum to {}, expected 1", total));
}

Eigen::Vector2d GaussianMixture2D::mean() const {
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (const auto& c : components) m += c.weight * c.mean;
  return m;
}

Eigen::Matrix2d GaussianMixture2D::covariance() const {
  Eigen::Vector2d m = mean();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& c : components) {
    Eigen::Vector2d d = c.mean - m;
    cov += c.weight * (c.covariance + d * d.transpose());
  }
  return cov;
}

GaussianMixture2D GaussianMixture2D::translated(const Eigen::Vector2d& offset) const {
  GaussianMixture2D out = *this;
  for (auto& c : out.components) c.mean += offset;
  return out;
}

void MixtureConfig::validate() const {
  if (min_components < 1) throw ConfigError("mixture min_components must be >= 1");
  if (min_components > max_components) throw ConfigError("mixture min_components > max_components");
  if ((mean_lower.array() > mean_upper.array()).any()) throw ConfigError("mixture mean bounds: lower > upper");
  if (!(eigen_lower > 0.0)) throw ConfigError("mixture eigenvalue lower bound must be positive");
  if (eigen_lower > eigen_upper) throw ConfigError("mixture eigenvalue bounds: lower > upper");
}

GaussianMixture2D sample_mixture(std::uint64_t seed, const MixtureConfig& cfg) {
  cfg.validate();
  Rng rng(seed, 0x6d6978ull);
  const auto span = static_cast<std::uint64_t>(cfg.max_components - cfg.min_components + 1);
  const int count = cfg.min_components + static_cast<int>(rng.below(span));

  GaussianMixture2D mixture;
  mixture.components.resize(count);
  double total = 0.0;
  for (auto& c : mixture.components) {
    // Dirichlet(1, ..., 1) via normalized exponentials.
    double u = 0.0;
    while (u <= 0.0) u = rng.uniform();
    c.weight = -std::log(u);
    total += c.weight;

    for (int d = 0; d < 2; ++d) c.mean(d) = rng.uniform(cfg.mean_lower(d), cfg.mean_upper(d));

    const double log_lo = std::log(cfg.eigen_lower);
    const double log_hi = std::log(cfg.eigen_upper);
    const double major = std::exp(rng.uniform(log_lo, log_hi));
    const double minor = std::exp(rng.uniform(log_lo, log_hi));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const Eigen::Vector2d axis(std::cos(angle), std::sin(angle));
    // minor * I + (major - minor) u u^T: exactly isotropic when the eigenvalues coincide.
    c.covariance = minor * Eigen::Matrix2d::Identity() + (major - minor) * axis * axis.transpose();
  }
  for (auto& c : mixture.components) c.weight /= total;
  mixture.validate();
  return mixture;
}

HolePose sample_from(const GaussianMixture2D& mixture, Rng& rng) {
  double u = rng.uniform();
  std::size_t pick = mixture.size() - 1;
  for (std::size_t i = 0; i < mixture.size(); ++i) {
    u -= mixture.components[i].weight;
    if (u < 0.0) {
      pick = i;
      break;
    }
  }
  const auto& c = mixture.components[pick];
  Eigen::Matrix2d chol = c.covariance.llt().matrixL();
  Eigen::Vector2d z(rng.normal(), rng.normal());
  return HolePose{c.mean + chol * z};
}

}  // namespace dpse
