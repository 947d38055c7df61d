#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dpse/baselines.hpp"
#include "dpse/errors.hpp"
#include "dpse/sim.hpp"

using namespace dpse;

namespace {

const SearchRegion kRegion{};
const TimingConfig kTiming{};

ProbeParams random_probe(Rng& rng, double h = 10.0) {
  ProbeParams p;
  for (auto& pt : p.points) pt = {rng.uniform(-h, h), rng.uniform(-h, h)};
  return p;
}

GaussianMixture2D tight_mode(Eigen::Vector2d at, double var = 1e-10) {
  GaussianMixture2D m;
  m.components.push_back({1.0, at, Eigen::Matrix2d::Identity() * var});
  return m;
}

double trapezoid_time(double length, double v, double acc) {
  if (length * acc >= v * v) return length / v + v / acc;
  return 2.0 * std::sqrt(length / acc);
}

}  // namespace

TEST(SimProbe, HoleAtThirdPoint) {
  ProbeParams p;
  for (int k = 0; k < kProbePoints; ++k) p.points[k] = {-9.0 + k, -9.0};
  p.points[2] = {4.0, 4.0};
  const auto r = simulate_probe(p, HolePose{{4.0, 4.0}}, kRegion, kTiming);
  EXPECT_TRUE(r.success);
  ASSERT_TRUE(r.success_index.has_value());
  EXPECT_EQ(*r.success_index, 3);
  EXPECT_DOUBLE_EQ(r.duration, kTiming.t_setup + 3 * kTiming.t_probe);
  EXPECT_TRUE(record_is_consistent(r));
  for (int k = 0; k < kProbePoints; ++k) {
    EXPECT_EQ(r.probes[k].probed, k <= 2);
    EXPECT_EQ(r.probes[k].hit, k == 2);
  }
}

TEST(SimProbe, AllMissesJustOutsideClearance) {
  ProbeParams p;
  const Eigen::Vector2d hole(0.0, 0.0);
  for (int k = 0; k < kProbePoints; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kProbePoints;
    p.points[k] = hole + (kRegion.hole_clearance + 1e-6) * Eigen::Vector2d(std::cos(a), std::sin(a));
  }
  const auto r = simulate_probe(p, HolePose{hole}, kRegion, kTiming);
  EXPECT_FALSE(r.success);
  EXPECT_DOUBLE_EQ(r.duration, kTiming.t_setup + kProbePoints * kTiming.t_probe + kTiming.t_fail);
}

TEST(SimProbe, MatchesDiskUnionMonteCarlo) {
  Rng rng(31);
  const ProbeParams p = random_probe(rng, 4.0);
  MixtureConfig mc;
  const auto mix = sample_mixture(8, mc);
  const int n = 100000;
  const auto est = success_prob_oracle(p.to_params(), mix, n, 77, kRegion, kTiming);
  // independent oracle: union of clearance disks, separate hole stream
  Rng holes(1234, 99);
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d h = sample_from(mix, holes).position;
    inside += std::any_of(p.points.begin(), p.points.end(),
                          [&](const Eigen::Vector2d& q) { return (q - h).norm() <= kRegion.hole_clearance; });
  }
  EXPECT_NEAR(est.success_rate, static_cast<double>(inside) / n, 0.01);
}

TEST(SimProbe, RecordFuzzAndPurity) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const ProbeParams p = random_probe(rng);
    const HolePose h{{rng.uniform(-10, 10), rng.uniform(-10, 10)}};
    const auto a = simulate_probe(p, h, kRegion, kTiming);
    const auto b = simulate_probe(p, h, kRegion, kTiming);
    ASSERT_TRUE(record_is_consistent(a));
    EXPECT_GT(a.duration, 0.0);
    EXPECT_EQ(a.duration, b.duration);
    EXPECT_EQ(a.probes, b.probes);
  }
}

TEST(SimProbe, MonotoneInClearance) {
  Rng rng(6);
  SearchRegion wide = kRegion;
  wide.hole_clearance = 1.0;
  for (int i = 0; i < 2000; ++i) {
    const ProbeParams p = random_probe(rng);
    const HolePose h{{rng.uniform(-10, 10), rng.uniform(-10, 10)}};
    if (simulate_probe(p, h, kRegion, kTiming).success) EXPECT_TRUE(simulate_probe(p, h, wide, kTiming).success);
  }
}

TEST(SimProbe, EarlierSuccessIsFaster) {
  ProbeParams p;
  for (int k = 0; k < kProbePoints; ++k) p.points[k] = {-9.0 + k, 0.0};
  double last = 0.0;
  for (int k = 0; k < kProbePoints; ++k) {
    const auto r = simulate_probe(p, HolePose{p.points[k]}, kRegion, kTiming);
    EXPECT_GT(r.duration, last);
    last = r.duration;
  }
}

TEST(SimSpiral, HoleAtCenter) {
  SpiralParams s;
  s.center = {1.0, -2.0};
  const auto r = simulate_spiral(s, HolePose{s.center}, kRegion, kTiming);
  EXPECT_TRUE(r.success);
  ASSERT_TRUE(r.contact_parameter.has_value());
  EXPECT_EQ(*r.contact_parameter, 0.0);
  EXPECT_DOUBLE_EQ(r.duration, kTiming.t_setup);
}

TEST(SimSpiral, UnreachableHoleFails) {
  SpiralParams s;
  s.extent_a = 3.0;
  s.extent_b = 2.0;
  s.orientation = 0.7;
  const double c = std::cos(0.7), sn = std::sin(0.7);
  const Eigen::Vector2d local(3.0 + kRegion.hole_clearance + 0.05, 0.0);
  const Eigen::Vector2d hole(c * local.x() - sn * local.y(), sn * local.x() + c * local.y());
  const auto r = simulate_spiral(s, HolePose{hole}, kRegion, kTiming);
  EXPECT_FALSE(r.success);
  SpiralPath path(s, kRegion.hole_clearance / 4);
  MotionProfile prof{path.length(), s.velocity, s.acceleration};
  EXPECT_DOUBLE_EQ(r.duration, kTiming.t_setup + prof.total_time() + kTiming.t_fail);
}

TEST(SimSpiral, TraversalMatchesQuadrature) {
  SpiralParams s;
  s.extent_a = s.extent_b = 5.0;
  s.windings = 3.0;
  s.velocity = 20.0;
  s.acceleration = 200.0;
  // Simpson on |q'(theta)|
  const double end = 2.0 * std::numbers::pi * s.windings;
  const int n = 200000;
  auto speed = [&](double t) {
    const double k = 5.0 / (2.0 * std::numbers::pi * s.windings);
    return k * std::sqrt(1.0 + t * t);
  };
  double acc = speed(0) + speed(end);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * speed(end * i / n);
  const double length = acc * end / (3.0 * n);
  const double expected = trapezoid_time(length, s.velocity, s.acceleration);
  const auto r = simulate_spiral(s, HolePose{{9.9, 9.9}}, kRegion, kTiming);
  ASSERT_FALSE(r.success);
  const double traversal = r.duration - kTiming.t_setup - kTiming.t_fail;
  EXPECT_NEAR(traversal / expected, 1.0, 0.005);
}

TEST(SimSpiral, ContainmentAndChordBound) {
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    SpiralParams s;
    s.center = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
    s.orientation = rng.uniform(0, std::numbers::pi);
    s.extent_a = rng.uniform(1, 6);
    s.extent_b = rng.uniform(1, 6);
    s.windings = rng.uniform(1, 8);
    const HolePose h{{rng.uniform(-9, 9), rng.uniform(-9, 9)}};
    const auto r = simulate_spiral(s, h, kRegion, kTiming);
    ASSERT_TRUE(record_is_consistent(r));
    if (!r.success) continue;
    const Eigen::Vector2d d = h.position - s.center;
    const double lx = std::cos(s.orientation) * d.x() + std::sin(s.orientation) * d.y();
    const double ly = -std::sin(s.orientation) * d.x() + std::cos(s.orientation) * d.y();
    const double ea = s.extent_a + kRegion.hole_clearance, eb = s.extent_b + kRegion.hole_clearance;
    EXPECT_LE(lx * lx / (ea * ea) + ly * ly / (eb * eb), 1.0 + 1e-9);
  }
  SpiralParams s;
  SpiralPath path(s, 0.125);
  for (std::size_t i = 1; i < path.points().size(); ++i)
    EXPECT_LE((path.points()[i] - path.points()[i - 1]).norm(), 0.125 + 1e-12);
}

TEST(SimSpiral, ShortMovesAreTriangular) {
  MotionProfile p{0.5, 20.0, 200.0};
  EXPECT_NEAR(p.total_time(), 2.0 * std::sqrt(0.5 / 200.0), 1e-12);
  EXPECT_NEAR(p.time_at(0.25), std::sqrt(2.0 * 0.25 / 200.0), 1e-12);
  MotionProfile q{100.0, 20.0, 200.0};
  EXPECT_NEAR(q.total_time(), 100.0 / 20.0 + 20.0 / 200.0, 1e-12);
}

TEST(SimOracle, FullCoverageGrid) {
  SearchRegion small{1.0, 0.5};
  const auto grid = baseline_fixed(StrategyKind::Probe, small);
  const auto est = success_prob_oracle(grid, tight_mode({0.1, -0.2}, 0.04), 20000, 3, small, kTiming);
  EXPECT_GE(est.success_rate, 0.99);
}

TEST(SimOracle, TightModeAtTouchPoint) {
  const auto grid = baseline_fixed(StrategyKind::Probe, kRegion);
  const Eigen::Vector2d at(grid.values(10), grid.values(11));
  EXPECT_EQ(success_prob_oracle(grid, tight_mode(at), 5000, 4, kRegion, kTiming).success_rate, 1.0);
}

TEST(SimOracle, SelfConsistentAndUncharged) {
  const auto mix = sample_mixture(4, MixtureConfig{});
  const auto grid = baseline_fixed(StrategyKind::Probe, kRegion);
  ExecutionTally tally;
  const int n = 40000;
  const auto a = success_prob_oracle(grid, mix, n, 1, kRegion, kTiming);
  const auto b = success_prob_oracle(grid, mix, n, 2, kRegion, kTiming);
  EXPECT_EQ(tally.count(), 0u);
  const double p = 0.5 * (a.success_rate + b.success_rate);
  EXPECT_LT(std::abs(a.success_rate - b.success_rate), 3.0 * std::sqrt(2.0 * p * (1 - p) / n) + 1e-12);
  EXPECT_EQ(a.success_rate, success_prob_oracle(grid, mix, n, 1, kRegion, kTiming).success_rate);
  simulate(grid, HolePose{}, kRegion, kTiming);
  EXPECT_EQ(tally.count(), 1u);
}

TEST(SimCollect, PassiveRecordsShareParams) {
  HoleProcess proc(sample_mixture(2, MixtureConfig{}), ProcessParams{}, 9);
  auto sampler = ParamsSampler::fixed(baseline_fixed(StrategyKind::Probe, kRegion));
  const auto ds = collect_task_dataset(proc, sampler, 128, kRegion, kTiming);
  ASSERT_EQ(ds.records.size(), 128u);
  for (const auto& r : ds.records) EXPECT_EQ(r.params, ds.records.front().params);
  EXPECT_EQ(proc.timestep(), 128u);
  EXPECT_THROW(collect_task_dataset(proc, sampler, 0, kRegion, kTiming), ConfigError);
}

TEST(SimCollect, UniformSamplerMarginals) {
  const auto bounds = parameter_bounds(StrategyKind::Spiral, kRegion);
  auto sampler = ParamsSampler::uniform(StrategyKind::Spiral, bounds, 10);
  const int n = 10000;
  std::vector<std::vector<double>> cols(kSpiralDim);
  for (int i = 0; i < n; ++i) {
    const auto p = sampler.next();
    ASSERT_TRUE(bounds.contains(p.values));
    for (int d = 0; d < kSpiralDim; ++d)
      cols[d].push_back((p.values(d) - bounds.lower(d)) / (bounds.upper(d) - bounds.lower(d)));
  }
  for (auto& c : cols) {
    std::sort(c.begin(), c.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) ks = std::max({ks, (i + 1.0) / n - c[i], c[i] - static_cast<double>(i) / n});
    EXPECT_LT(ks, 1.95 / std::sqrt(n));  // 0.1% per marginal
  }
}

TEST(SimParams, RoundTripsAndBounds) {
  SpiralParams s;
  s.center = {1, 2};
  s.orientation = 0.3;
  const auto back = SpiralParams::from_params(s.to_params());
  EXPECT_EQ(back.center, s.center);
  EXPECT_EQ(back.orientation, s.orientation);
  const auto bounds = parameter_bounds(StrategyKind::Probe, kRegion);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = bounds.sample_uniform(rng);
    EXPECT_LT((bounds.denormalize(bounds.normalize(x)) - x).norm(), 1e-12);
    EXPECT_LE(bounds.normalize(x).cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_THROW((SearchRegion{1.0, 2.0}.validate()), ConfigError);
}
