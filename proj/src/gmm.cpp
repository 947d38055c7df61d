#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "dpse/baselines.hpp"
#include "dpse/errors.hpp"

namespace dpse {
namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

std::vector<Eigen::Vector2d> kmeans_plus_plus(const Points& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Vector2d> centers;
  centers.push_back(x.row(static_cast<Eigen::Index>(rng.below(n))).transpose());
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i).transpose() - centers[0]).squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    centers.push_back(x.row(pick).transpose());
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i).transpose() - centers.back()).squaredNorm());
  }
  return centers;
}

Eigen::Matrix2d floor_eigenvalues(const Eigen::Matrix2d& s, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(s);
  const Eigen::Vector2d lambda = eig.eigenvalues().cwiseMax(floor);
  Eigen::Matrix2d out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

GmmFit fit_gmm(const Points& x, const GmmConfig& cfg) {
  if (cfg.components < 1 || cfg.max_iterations < 1 || !(cfg.covariance_floor > 0.0))
    throw ConfigError("invalid GMM configuration");
  const Eigen::Index n = x.rows();
  const int k = cfg.components;
  if (n < 1) throw InsufficientDataError("GMM fit needs at least one point");
  if (!x.allFinite()) throw NumericError("GMM fit on non-finite points");

  Rng rng(cfg.seed, 0x676d6dull);
  const auto centers = kmeans_plus_plus(x, k, rng);

  // Initial covariance: pooled scatter, floored.
  Eigen::Vector2d mu = x.colwise().mean().transpose();
  Eigen::Matrix2d pooled = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) pooled += (x.row(i).transpose() - mu) * (x.row(i).transpose() - mu).transpose();
  pooled /= static_cast<double>(n);
  GmmFit fit;
  for (int c = 0; c < k; ++c)
    fit.mixture.components.push_back({1.0 / k, centers[c], floor_eigenvalues(pooled, cfg.covariance_floor)});

  Eigen::MatrixXd logr(n, k);
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    // E-step
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d p = x.row(i).transpose();
      double peak = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const auto& comp = fit.mixture.components[c];
        logr(i, c) = comp.weight > 0.0 ? std::log(comp.weight) + log_normal_density<double>(comp, p)
                                       : -std::numeric_limits<double>::infinity();
        peak = std::max(peak, logr(i, c));
      }
      double acc = 0.0;
      for (int c = 0; c < k; ++c) acc += std::exp(logr(i, c) - peak);
      const double lse = peak + std::log(acc);
      ll += lse;
      for (int c = 0; c < k; ++c) logr(i, c) = std::exp(logr(i, c) - lse);
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood is not finite");
    if (ll < previous - 1e-9 * std::max(1.0, std::abs(previous)))
      throw NumericError(fmt::format("EM log-likelihood decreased at iteration {}: {} -> {}", it, previous, ll));
    fit.log_likelihood.push_back(ll);
    fit.iterations = it + 1;
    if (ll - previous < cfg.tolerance) break;
    previous = ll;

    // M-step; components without responsibility keep their parameters.
    for (int c = 0; c < k; ++c) {
      auto& comp = fit.mixture.components[c];
      const double nk = logr.col(c).sum();
      comp.weight = nk / static_cast<double>(n);
      if (nk < 1e-12) continue;
      Eigen::Vector2d mean = (x.transpose() * logr.col(c)) / nk;
      Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector2d d = x.row(i).transpose() - mean;
        s += logr(i, c) * d * d.transpose();
      }
      comp.mean = mean;
      comp.covariance = floor_eigenvalues(s / nk, cfg.covariance_floor);
    }
    double wsum = 0.0;
    for (const auto& comp : fit.mixture.components) wsum += comp.weight;
    for (auto& comp : fit.mixture.components) comp.weight /= wsum;
  }
  return fit;
}

Points successful_contacts(std::span<const ExecutionRecord> records) {
  std::vector<Eigen::Vector2d> found;
  for (const auto& r : records)
    if (r.success) found.push_back(r.hole.position);
  Points out(static_cast<Eigen::Index>(found.size()), 2);
  for (std::size_t i = 0; i < found.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = found[i].transpose();
  return out;
}

ProbeParams baseline_gmm_probe(std::span<const ExecutionRecord> records, const SearchRegion& region,
                               const GmmConfig& cfg) {
  for (const auto& r : records)
    if (r.params.kind != StrategyKind::Probe) throw ContractError("GMM heuristic needs probe records");
  const Points contacts = successful_contacts(records);
  if (contacts.rows() < kProbePoints)
    throw InsufficientDataError(
        fmt::format("GMM heuristic needs {} successful records, got {}", kProbePoints, contacts.rows()));
  GmmConfig c = cfg;
  c.components = kProbePoints;
  GmmFit fit = fit_gmm(contacts, c);
  std::vector<int> order(kProbePoints);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return fit.mixture.components[a].weight > fit.mixture.components[b].weight;
  });
  const ParamBounds bounds = parameter_bounds(StrategyKind::Probe, region);
  ProbeParams p;
  for (int i = 0; i < kProbePoints; ++i) p.points[i] = fit.mixture.components[order[i]].mean;
  return ProbeParams::from_params({StrategyKind::Probe, bounds.clamp(p.to_params().values)});
}

}  // namespace dpse
