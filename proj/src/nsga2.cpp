#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpse/baselines.hpp"
#include "dpse/errors.hpp"

namespace dpse {
namespace {

bool dominates(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.array() <= b.array()).all() && (a.array() < b.array()).any();
}

struct Variation {
  double eta_c;
  double eta_m;
  double p_crossover;
  double p_mutation;
  const ParamBounds& bounds;
  Rng& rng;

  double sbx_beta(double u, double beta) const {
    const double alpha = 2.0 - std::pow(beta, -(eta_c + 1.0));
    return u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (eta_c + 1.0))
                            : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta_c + 1.0));
  }

  void crossover(Eigen::VectorXd& a, Eigen::VectorXd& b) {
    if (!rng.bernoulli(p_crossover)) return;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!rng.bernoulli(0.5)) continue;
      if (std::abs(a(i) - b(i)) <= 1e-14) continue;
      const double y1 = std::min(a(i), b(i));
      const double y2 = std::max(a(i), b(i));
      const double lo = bounds.lower(i);
      const double hi = bounds.upper(i);
      const double u = rng.uniform();
      const double bq1 = sbx_beta(u, 1.0 + 2.0 * (y1 - lo) / (y2 - y1));
      const double bq2 = sbx_beta(u, 1.0 + 2.0 * (hi - y2) / (y2 - y1));
      double c1 = std::clamp(0.5 * ((y1 + y2) - bq1 * (y2 - y1)), lo, hi);
      double c2 = std::clamp(0.5 * ((y1 + y2) + bq2 * (y2 - y1)), lo, hi);
      if (rng.bernoulli(0.5)) std::swap(c1, c2);
      a(i) = c1;
      b(i) = c2;
    }
  }

  void mutate(Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (!rng.bernoulli(p_mutation)) continue;
      const double lo = bounds.lower(i);
      const double hi = bounds.upper(i);
      const double d1 = (y(i) - lo) / (hi - lo);
      const double d2 = (hi - y(i)) / (hi - lo);
      const double u = rng.uniform();
      const double power = 1.0 / (eta_m + 1.0);
      double dq;
      if (u < 0.5) {
        const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta_m + 1.0);
        dq = std::pow(val, power) - 1.0;
      } else {
        const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta_m + 1.0);
        dq = 1.0 - std::pow(val, power);
      }
      y(i) = std::clamp(y(i) + dq * (hi - lo), lo, hi);
    }
  }
};

void evaluate(Individual& ind, const GaussianMixture2D& mixture, const Nsga2Config& cfg, const SearchRegion& region,
              const TimingConfig& timing) {
  Rng rng = Rng(cfg.seed, 0x6576616cull).split(ind.id);
  int failures = 0;
  double duration = 0.0;
  std::optional<SpiralPath> path;
  if (ind.params.kind == StrategyKind::Spiral)
    path.emplace(SpiralParams::from_params(ind.params), region.hole_clearance / 4.0);
  for (int e = 0; e < cfg.evals_per_individual; ++e) {
    const HolePose hole = sample_from(mixture, rng);
    const ExecutionRecord r =
        path ? simulate_spiral(*path, hole, region, timing) : simulate(ind.params, hole, region, timing);
    failures += r.success ? 0 : 1;
    duration += r.duration;
  }
  ind.fail = static_cast<double>(failures) / cfg.evals_per_individual;
  ind.cycle = duration / cfg.evals_per_individual;
}

std::vector<Eigen::Vector2d> objectives_of(const std::vector<Individual>& pop) {
  std::vector<Eigen::Vector2d> f;
  f.reserve(pop.size());
  for (const auto& ind : pop) f.emplace_back(ind.fail, ind.cycle);
  return f;
}

void assign_rank_crowding(std::vector<Individual>& pop) {
  const auto f = objectives_of(pop);
  const auto rank = non_dominated_sort(f);
  const int max_rank = pop.empty() ? -1 : *std::max_element(rank.begin(), rank.end());
  for (int r = 0; r <= max_rank; ++r) {
    std::vector<int> front;
    for (int i = 0; i < static_cast<int>(pop.size()); ++i)
      if (rank[i] == r) front.push_back(i);
    const auto cd = crowding_distance(f, front);
    for (std::size_t j = 0; j < front.size(); ++j) {
      pop[front[j]].rank = r;
      pop[front[j]].crowding = cd[j];
    }
  }
}

bool better(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  if (a.crowding != b.crowding) return a.crowding > b.crowding;
  return a.id < b.id;
}

std::size_t scalar_best(const std::vector<Individual>& pop, const Nsga2Config& cfg) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i) {
    const double a = pop[i].scalarized(cfg.alpha_cycle, cfg.alpha_fail);
    const double b = pop[best].scalarized(cfg.alpha_cycle, cfg.alpha_fail);
    if (a < b || (a == b && pop[i].id < pop[best].id)) best = i;
  }
  return best;
}

}  // namespace

void Nsga2Config::validate() const {
  if (mu < 2 || lambda < 2) throw ConfigError("NSGA-II needs mu, lambda >= 2");
  if (evals_per_individual < 1) throw ConfigError("NSGA-II needs at least one evaluation per individual");
  if (budget < mu * evals_per_individual)
    throw ConfigError("NSGA-II budget is too small to evaluate the initial population");
  if (!(eta_crossover > 0.0 && eta_mutation > 0.0)) throw ConfigError("NSGA-II distribution indices must be > 0");
  if (!(p_crossover >= 0.0 && p_crossover <= 1.0)) throw ConfigError("crossover probability must lie in [0, 1]");
  if (p_mutation && !(*p_mutation >= 0.0 && *p_mutation <= 1.0))
    throw ConfigError("mutation probability must lie in [0, 1]");
  if (!(alpha_cycle >= 0.0 && alpha_fail >= 0.0)) throw ConfigError("scalarization weights must be >= 0");
}

Nsga2Config Nsga2Config::spiral_preset() {
  Nsga2Config c;
  c.mu = c.lambda = 25;
  c.budget = 250;
  return c;
}

Nsga2Config Nsga2Config::probe_preset() {
  Nsga2Config c;
  c.mu = c.lambda = 30;
  c.budget = 300;
  return c;
}

nlohmann::json to_json(const Nsga2Config& c) {
  nlohmann::json j = {{"mu", c.mu},
                      {"lambda", c.lambda},
                      {"budget", c.budget},
                      {"evals_per_individual", c.evals_per_individual},
                      {"eta_crossover", c.eta_crossover},
                      {"eta_mutation", c.eta_mutation},
                      {"p_crossover", c.p_crossover},
                      {"alpha_cycle", c.alpha_cycle},
                      {"alpha_fail", c.alpha_fail},
                      {"seed", c.seed}};
  if (c.p_mutation) j["p_mutation"] = *c.p_mutation;
  return j;
}

Nsga2Config nsga2_config_from_json(const nlohmann::json& j, Nsga2Config c) {
  try {
    c.mu = j.value("mu", c.mu);
    c.lambda = j.value("lambda", c.lambda);
    c.budget = j.value("budget", c.budget);
    c.evals_per_individual = j.value("evals_per_individual", c.evals_per_individual);
    c.eta_crossover = j.value("eta_crossover", c.eta_crossover);
    c.eta_mutation = j.value("eta_mutation", c.eta_mutation);
    c.p_crossover = j.value("p_crossover", c.p_crossover);
    if (j.contains("p_mutation")) c.p_mutation = j["p_mutation"].get<double>();
    c.alpha_cycle = j.value("alpha_cycle", c.alpha_cycle);
    c.alpha_fail = j.value("alpha_fail", c.alpha_fail);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed NSGA-II config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<int> non_dominated_sort(std::span<const Eigen::Vector2d> f) {
  const int n = static_cast<int>(f.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> count(n, 0), rank(n, -1), current;
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(f[p], f[q]))
        dominated[p].push_back(q);
      else if (dominates(f[q], f[p]))
        ++count[p];
    }
    if (count[p] == 0) {
      rank[p] = 0;
      current.push_back(p);
    }
  }
  for (int r = 0; !current.empty(); ++r) {
    std::vector<int> next;
    for (int p : current)
      for (int q : dominated[p])
        if (--count[q] == 0) {
          rank[q] = r + 1;
          next.push_back(q);
        }
    current = std::move(next);
  }
  return rank;
}

std::vector<double> crowding_distance(std::span<const Eigen::Vector2d> f, std::span<const int> front) {
  const std::size_t n = front.size();
  std::vector<double> d(n, 0.0);
  if (n <= 2) {
    std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
    return d;
  }
  std::vector<std::size_t> order(n);
  for (int m = 0; m < 2; ++m) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[front[a]](m) < f[front[b]](m); });
    const double lo = f[front[order.front()]](m);
    const double hi = f[front[order.back()]](m);
    d[order.front()] = d[order.back()] = std::numeric_limits<double>::infinity();
    if (hi <= lo) continue;
    for (std::size_t j = 1; j + 1 < n; ++j)
      d[order[j]] += (f[front[order[j + 1]]](m) - f[front[order[j - 1]]](m)) / (hi - lo);
  }
  return d;
}

Nsga2Result nsga2_optimize(StrategyKind kind, const GaussianMixture2D& mixture, const Nsga2Config& cfg,
                           const SearchRegion& region, const TimingConfig& timing) {
  cfg.validate();
  mixture.validate();
  const ParamBounds bounds = parameter_bounds(kind, region);
  const int dim = param_dim(kind);
  Rng rng(cfg.seed, 0x6e736761ull);
  Variation var{cfg.eta_crossover, cfg.eta_mutation, cfg.p_crossover, cfg.p_mutation.value_or(1.0 / dim), bounds,
                rng};
  ExecutionTally tally;
  std::uint64_t next_id = 0;

  std::vector<Individual> pop(cfg.mu);
  for (auto& ind : pop) {
    ind.id = next_id++;
    ind.params = {kind, bounds.sample_uniform(rng)};
    evaluate(ind, mixture, cfg, region, timing);
  }
  assign_rank_crowding(pop);
  Nsga2Result result;
  result.best_trace.push_back(pop[scalar_best(pop, cfg)].scalarized(cfg.alpha_cycle, cfg.alpha_fail));

  auto tournament = [&]() -> const Individual& {
    const Individual& a = pop[rng.below(pop.size())];
    const Individual& b = pop[rng.below(pop.size())];
    return better(a, b) ? a : b;
  };

  while (true) {
    const auto used = static_cast<std::int64_t>(tally.count());
    const int affordable = static_cast<int>((cfg.budget - used) / cfg.evals_per_individual);
    const int n_off = std::min(cfg.lambda, affordable);
    if (n_off <= 0) break;
    std::vector<Individual> offspring;
    while (static_cast<int>(offspring.size()) < n_off) {
      Eigen::VectorXd a = tournament().params.values;
      Eigen::VectorXd b = tournament().params.values;
      var.crossover(a, b);
      var.mutate(a);
      var.mutate(b);
      for (Eigen::VectorXd* child : {&a, &b}) {
        if (static_cast<int>(offspring.size()) == n_off) break;
        Individual ind;
        ind.id = next_id++;
        ind.params = {kind, *child};
        offspring.push_back(std::move(ind));
      }
    }
    for (auto& ind : offspring) evaluate(ind, mixture, cfg, region, timing);

    std::vector<Individual> combined = pop;
    combined.insert(combined.end(), offspring.begin(), offspring.end());
    assign_rank_crowding(combined);
    const std::size_t elite = scalar_best(combined, cfg);
    const std::uint64_t elite_id = combined[elite].id;
    std::stable_sort(combined.begin(), combined.end(), better);
    combined.resize(cfg.mu);
    if (std::none_of(combined.begin(), combined.end(), [&](const Individual& i) { return i.id == elite_id; })) {
      std::vector<Individual> all = pop;
      all.insert(all.end(), offspring.begin(), offspring.end());
      combined.back() = *std::find_if(all.begin(), all.end(), [&](const Individual& i) { return i.id == elite_id; });
    }
    pop = std::move(combined);
    assign_rank_crowding(pop);
    ++result.generations;
    result.best_trace.push_back(pop[scalar_best(pop, cfg)].scalarized(cfg.alpha_cycle, cfg.alpha_fail));
  }

  result.best = pop[scalar_best(pop, cfg)];
  for (const auto& ind : pop)
    if (ind.rank == 0) result.front.push_back(ind);
  result.population = pop;
  result.executions = tally.count();
  return result;
}

}  // namespace dpse
