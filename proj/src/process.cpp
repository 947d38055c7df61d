#include "dpse/process.hpp"

#include "dpse/errors.hpp"

namespace dpse {

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::Stationary: return "stationary";
    case ProcessKind::Drift: return "drift";
    case ProcessKind::Brownian: return "brownian";
    case ProcessKind::Shift: return "shift";
  }
  return "stationary";
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "stationary") return ProcessKind::Stationary;
  if (name == "drift") return ProcessKind::Drift;
  if (name == "brownian") return ProcessKind::Brownian;
  if (name == "shift") return ProcessKind::Shift;
  throw ConfigError("unknown process kind '" + name + "'");
}

void ProcessParams::validate() const {
  if (!drift.allFinite()) throw ConfigError("drift offset must be finite");
  if (!(step_stddev >= 0.0)) throw ConfigError("brownian step_stddev must be >= 0");
  if (!(p_shift >= 0.0 && p_shift <= 1.0)) throw ConfigError("p_shift must lie in [0, 1]");
  if (!(max_offset >= 0.0)) throw ConfigError("shift max_offset must be >= 0");
}

HoleProcess::HoleProcess(GaussianMixture2D base, ProcessParams params, std::uint64_t seed)
    : base_(std::move(base)),
      current_(base_),
      params_(params),
      seed_(seed),
      hole_rng_(seed, 1),
      motion_rng_(seed, 2) {
  base_.validate();
  params_.validate();
}

HolePose HoleProcess::sample_hole() { return sample_from(current_, hole_rng_); }

void HoleProcess::advance() {
  ++timestep_;
  switch (params_.kind) {
    case ProcessKind::Stationary:
      return;
    case ProcessKind::Drift:
      // Recomputed from the step count so t steps equal one translation by t * drift.
      offset_ = static_cast<double>(timestep_) * params_.drift;
      break;
    case ProcessKind::Brownian:
      offset_ += params_.step_stddev * Eigen::Vector2d(motion_rng_.normal(), motion_rng_.normal());
      break;
    case ProcessKind::Shift:
      if (motion_rng_.bernoulli(params_.p_shift)) {
        ++shifts_;
        offset_ += Eigen::Vector2d(motion_rng_.uniform(-params_.max_offset, params_.max_offset),
                                   motion_rng_.uniform(-params_.max_offset, params_.max_offset));
      }
      break;
  }
  current_ = base_.translated(offset_);
}

nlohmann::json to_json(const GaussianMixture2D& mixture) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : mixture.components) {
    weights.push_back(c.weight);
    means.push_back({c.mean(0), c.mean(1)});
    covs.push_back({{c.covariance(0, 0), c.covariance(0, 1)}, {c.covariance(1, 0), c.covariance(1, 1)}});
  }
  return {{"weights", weights}, {"means", means}, {"covariances", covs}};
}

GaussianMixture2D mixture_from_json(const nlohmann::json& j) {
  try {
    const auto& w = j.at("weights");
    const auto& m = j.at("means");
    const auto& c = j.at("covariances");
    if (w.size() != m.size() || w.size() != c.size())
      throw ConfigError("mixture weights/means/covariances lengths differ");
    GaussianMixture2D mixture;
    for (std::size_t i = 0; i < w.size(); ++i) {
      GaussianComponent comp;
      comp.weight = w[i].get<double>();
      comp.mean = Eigen::Vector2d(m[i].at(0).get<double>(), m[i].at(1).get<double>());
      for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 2; ++k) comp.covariance(r, k) = c[i].at(r).at(k).get<double>();
      mixture.components.push_back(comp);
    }
    mixture.validate();
    return mixture;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mixture JSON: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid mixture: ") + e.what());
  }
}

nlohmann::json to_json(const MixtureConfig& cfg) {
  return {{"min_components", cfg.min_components},
          {"max_components", cfg.max_components},
          {"mean_lower", {cfg.mean_lower(0), cfg.mean_lower(1)}},
          {"mean_upper", {cfg.mean_upper(0), cfg.mean_upper(1)}},
          {"eigen_lower", cfg.eigen_lower},
          {"eigen_upper", cfg.eigen_upper}};
}

MixtureConfig mixture_config_from_json(const nlohmann::json& j, MixtureConfig cfg) {
  try {
    cfg.min_components = j.value("min_components", cfg.min_components);
    cfg.max_components = j.value("max_components", cfg.max_components);
    if (j.contains("mean_lower")) cfg.mean_lower = {j["mean_lower"].at(0).get<double>(), j["mean_lower"].at(1).get<double>()};
    if (j.contains("mean_upper")) cfg.mean_upper = {j["mean_upper"].at(0).get<double>(), j["mean_upper"].at(1).get<double>()};
    cfg.eigen_lower = j.value("eigen_lower", cfg.eigen_lower);
    cfg.eigen_upper = j.value("eigen_upper", cfg.eigen_upper);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mixture config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const ProcessParams& p) {
  return {{"kind", to_string(p.kind)},
          {"drift", {p.drift(0), p.drift(1)}},
          {"step_stddev", p.step_stddev},
          {"p_shift", p.p_shift},
          {"max_offset", p.max_offset}};
}

ProcessParams process_params_from_json(const nlohmann::json& j, ProcessParams p) {
  try {
    if (j.contains("kind")) p.kind = process_kind_from_string(j["kind"].get<std::string>());
    if (j.contains("drift")) p.drift = {j["drift"].at(0).get<double>(), j["drift"].at(1).get<double>()};
    p.step_stddev = j.value("step_stddev", p.step_stddev);
    p.p_shift = j.value("p_shift", p.p_shift);
    p.max_offset = j.value("max_offset", p.max_offset);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed process config: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const HoleProcess& process) {
  nlohmann::json j = to_json(process.base());
  nlohmann::json params = to_json(process.params());
  for (auto it = params.begin(); it != params.end(); ++it) j[it.key()] = it.value();
  j["seed"] = process.seed();
  return j;
}

HoleProcess process_from_json(const nlohmann::json& j) {
  GaussianMixture2D mixture = mixture_from_json(j);
  ProcessParams params = process_params_from_json(j);
  std::uint64_t seed = 0;
  try {
    seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed process seed: ") + e.what());
  }
  return HoleProcess(std::move(mixture), params, seed);
}

}  // namespace dpse
