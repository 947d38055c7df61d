#pragma once

#include <string>
#include <vector>

#include "dpse/mixture.hpp"
#include "dpse/sim.hpp"

namespace dpse {

struct PatternFrame {
  GaussianMixture2D mixture;
  StrategyParams params;
};

/// Density contours of the mixture with the touch points or spiral path on
/// top. A non-empty time sequence is rendered as a strip of panels after the
/// first one.
std::string plot_pattern(const GaussianMixture2D& mixture, const StrategyParams& params, const SearchRegion& region,
                         const std::vector<PatternFrame>& sequence = {});

}  // namespace dpse
