#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dpse/adgraph.hpp"
#include "dpse/rng.hpp"

namespace dpse::testing {

/// Builds a graph from leaves; the result may have any shape.
using GraphFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest |analytic - central difference| / max(|analytic|, |fd|, floor)
/// over every input entry. The root is sum(f(x) * R) with a fixed random R.
inline double max_fd_error(const GraphFn& f, const std::vector<ad::Tensor>& inputs, std::uint64_t seed,
                           double h = 1e-5, double floor = 1e-3) {
  ad::Tensor weights;
  auto root_value = [&](const std::vector<ad::Tensor>& xs, std::vector<ad::Tensor>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x));
    ad::Var out = f(tape, leaves);
    if (weights.size() == 0) {
      Rng rng(seed, 0x7766);
      weights.resize(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1.0, 1.0);
    }
    ad::Var root = ad::sum(ad::mul(out, tape.constant(weights)));
    if (grads) {
      tape.backward(root);
      grads->clear();
      for (const auto& l : leaves) grads->push_back(tape.grad(l));
    }
    return root.scalar();
  };
  std::vector<ad::Tensor> analytic;
  root_value(inputs, &analytic);
  double worst = 0.0;
  std::vector<ad::Tensor> probe = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (Eigen::Index i = 0; i < inputs[t].size(); ++i) {
      const double x = inputs[t].data()[i];
      probe[t].data()[i] = x + h;
      const double up = root_value(probe, nullptr);
      probe[t].data()[i] = x - h;
      const double down = root_value(probe, nullptr);
      probe[t].data()[i] = x;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[t].data()[i];
      worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor}));
    }
  }
  return worst;
}

inline ad::Tensor random_tensor(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  ad::Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace dpse::testing
