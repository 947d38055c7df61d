#include "dpse/svg.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

namespace dpse {
namespace {

constexpr double kPanel = 320.0;
constexpr double kPad = 12.0;
constexpr int kGrid = 64;

struct Frame {
  double x0;
  double half;
  double px(double x) const { return x0 + kPad + (x + half) / (2.0 * half) * (kPanel - 2.0 * kPad); }
  double py(double y) const { return kPad + (half - y) / (2.0 * half) * (kPanel - 2.0 * kPad); }
  double scale() const { return (kPanel - 2.0 * kPad) / (2.0 * half); }
};

void contours(std::string& out, const GaussianMixture2D& mixture, const Frame& f) {
  const double h = f.half;
  const double step = 2.0 * h / kGrid;
  Eigen::MatrixXd d(kGrid + 1, kGrid + 1);
  for (int i = 0; i <= kGrid; ++i)
    for (int j = 0; j <= kGrid; ++j)
      d(i, j) = std::exp(log_density<double>(mixture, Eigen::Vector2d(-h + i * step, -h + j * step)));
  const double peak = d.maxCoeff();
  for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double level = frac * peak;
    std::string path;
    for (int i = 0; i < kGrid; ++i) {
      for (int j = 0; j < kGrid; ++j) {
        // corners counter-clockwise, edges between consecutive corners
        const std::array<Eigen::Vector2d, 4> c{Eigen::Vector2d(i, j), Eigen::Vector2d(i + 1, j),
                                               Eigen::Vector2d(i + 1, j + 1), Eigen::Vector2d(i, j + 1)};
        const std::array<double, 4> v{d(i, j), d(i + 1, j), d(i + 1, j + 1), d(i, j + 1)};
        std::vector<Eigen::Vector2d> cross;
        for (int e = 0; e < 4; ++e) {
          const double a = v[e] - level;
          const double b = v[(e + 1) % 4] - level;
          if ((a < 0.0) == (b < 0.0)) continue;
          const double t = a / (a - b);
          cross.push_back(c[e] + t * (c[(e + 1) % 4] - c[e]));
        }
        for (std::size_t k = 0; k + 1 < cross.size(); k += 2) {
          const Eigen::Vector2d p = Eigen::Vector2d::Constant(-h) + step * cross[k];
          const Eigen::Vector2d q = Eigen::Vector2d::Constant(-h) + step * cross[k + 1];
          path += fmt::format("M{:.2f} {:.2f}L{:.2f} {:.2f}", f.px(p.x()), f.py(p.y()), f.px(q.x()), f.py(q.y()));
        }
      }
    }
    if (!path.empty())
      out += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-opacity=\"{:.2f}\" "
                         "stroke-width=\"1\"/>\n",
                         path, 0.3 + 0.7 * frac);
  }
}

void pattern(std::string& out, const StrategyParams& params, const SearchRegion& region, const Frame& f) {
  if (params.kind == StrategyKind::Probe) {
    const ProbeParams probe = ProbeParams::from_params(params);
    for (int k = 0; k < kProbePoints; ++k) {
      const auto& p = probe.points[k];
      out += fmt::format("<circle cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"{:.3f}\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n",
                         f.px(p.x()), f.py(p.y()), region.hole_clearance * f.scale());
      out += fmt::format("<text x=\"{:.3f}\" y=\"{:.3f}\" font-size=\"8\">{}</text>\n", f.px(p.x()) + 4.0,
                         f.py(p.y()) - 4.0, k + 1);
    }
    return;
  }
  const SpiralPath path(SpiralParams::from_params(params), region.hole_clearance / 4.0);
  std::string pts;
  for (const auto& p : path.points()) pts += fmt::format("{:.3f},{:.3f} ", f.px(p.x()), f.py(p.y()));
  out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"0.8\"/>\n", pts);
}

void panel(std::string& out, const GaussianMixture2D& mixture, const StrategyParams& params,
           const SearchRegion& region, int index) {
  const Frame f{index * kPanel, region.half_extent};
  out += fmt::format("<g class=\"panel\" id=\"panel-{}\">\n", index);
  out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"white\" "
                     "stroke=\"#444\"/>\n",
                     f.px(-region.half_extent), f.py(region.half_extent), 2.0 * region.half_extent * f.scale(),
                     2.0 * region.half_extent * f.scale());
  contours(out, mixture, f);
  pattern(out, params, region, f);
  out += "</g>\n";
}

}  // namespace

std::string plot_pattern(const GaussianMixture2D& mixture, const StrategyParams& params, const SearchRegion& region,
                         const std::vector<PatternFrame>& sequence) {
  const int panels = 1 + static_cast<int>(sequence.size());
  std::string out = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" viewBox=\"0 0 {0:.0f} "
      "{1:.0f}\">\n",
      panels * kPanel, kPanel);
  panel(out, mixture, params, region, 0);
  for (std::size_t i = 0; i < sequence.size(); ++i)
    panel(out, sequence[i].mixture, sequence[i].params, region, static_cast<int>(i) + 1);
  out += "</svg>\n";
  return out;
}

}  // namespace dpse
