#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fd_check.hpp"

namespace dpse::testing {

using ad::Tensor;
using ad::Var;

struct OpCase {
  std::string name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  GraphFn graph;
};

// Entries at least `gap` away from every kink in `kinks`.
inline Tensor away_from(Rng& rng, Eigen::Index r, Eigen::Index c, std::vector<double> kinks, double gap = 1e-2) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double x;
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < gap; }));
    t.data()[i] = x;
  }
  return t;
}

// Rows whose smallest entry is separated from the runner-up.
inline Tensor separated_min(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Tensor t = random_tensor(rng, r, c, 0.5, 2.0);
  for (Eigen::Index i = 0; i < r; ++i) t(i, rng.below(c)) = rng.uniform(-1.0, 0.0);
  return t;
}

inline std::vector<OpCase> op_cases() {
  auto two = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r, c), random_tensor(rng, r, c)}; };
  };
  auto one = [](Eigen::Index r, Eigen::Index c, double lo = -2.0, double hi = 2.0) {
    return [r, c, lo, hi](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r, c, lo, hi)}; };
  };
  return {
      {"add", two(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return v[0] + v[1]; }},
      {"sub", two(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return v[0] - v[1]; }},
      {"mul", two(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return v[0] * v[1]; }},
      {"scale", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return 2.5 * v[0]; }},
      {"shift", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return v[0] + 1.5; }},
      {"matmul",
       [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, 3, 4), random_tensor(rng, 4, 2)}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }},
      {"affine",
       [](Rng& rng) {
         return std::vector<Tensor>{random_tensor(rng, 5, 3), random_tensor(rng, 3, 2), random_tensor(rng, 1, 2)};
       },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::affine(v[0], v[1], v[2]); }},
      {"tanh", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::tanh(v[0]); }},
      {"sigmoid", one(3, 4, -6, 6), [](ad::Tape&, const std::vector<Var>& v) { return ad::sigmoid(v[0]); }},
      {"softplus", one(3, 4, -6, 6), [](ad::Tape&, const std::vector<Var>& v) { return ad::softplus(v[0]); }},
      {"log", one(3, 4, 0.2, 3.0), [](ad::Tape&, const std::vector<Var>& v) { return ad::log(v[0]); }},
      {"exp", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::exp(v[0]); }},
      {"sqrt", one(3, 4, 0.2, 3.0), [](ad::Tape&, const std::vector<Var>& v) { return ad::sqrt(v[0]); }},
      {"square", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::square(v[0]); }},
      {"clamp_min", [](Rng& rng) { return std::vector<Tensor>{away_from(rng, 3, 4, {0.3})}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::clamp_min(v[0], 0.3); }},
      {"sum", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(v[0]); }},
      {"mean", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::mean(v[0]); }},
      {"sum_rows", one(3, 4), [](ad::Tape&, const std::vector<Var>& v) { return ad::sum_rows(v[0]); }},
      {"concat",
       [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, 3, 2), random_tensor(rng, 3, 4)}; },
       [](ad::Tape&, const std::vector<Var>& v) {
         std::vector<Var> parts{v[0], v[1], v[0]};
         return ad::concat(parts);
       }},
      {"slice", one(3, 6), [](ad::Tape&, const std::vector<Var>& v) { return ad::slice(v[0], 1, 3); }},
      {"reshape", one(4, 6), [](ad::Tape&, const std::vector<Var>& v) { return ad::reshape(v[0], 12, 2); }},
      {"l1_norm", [](Rng& rng) { return std::vector<Tensor>{away_from(rng, 3, 4, {0.0})}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::l1_norm(v[0]); }},
      {"l1_rows", [](Rng& rng) { return std::vector<Tensor>{away_from(rng, 3, 4, {0.0})}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::l1_rows(v[0]); }},
      {"min_reduce", [](Rng& rng) { return std::vector<Tensor>{separated_min(rng, 1, 6)}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::min_reduce(v[0]); }},
      {"min_rows", [](Rng& rng) { return std::vector<Tensor>{separated_min(rng, 3, 5)}; },
       [](ad::Tape&, const std::vector<Var>& v) { return ad::min_rows(v[0]); }},
      {"smooth_min", one(2, 5), [](ad::Tape&, const std::vector<Var>& v) { return ad::smooth_min(v[0], 0.1); }},
      {"smooth_min_rows", one(3, 5),
       [](ad::Tape&, const std::vector<Var>& v) { return ad::smooth_min_rows(v[0], 0.1); }},
  };
}

}  // namespace dpse::testing
