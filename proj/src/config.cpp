#include "dpse/config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "dpse/errors.hpp"

namespace dpse {
namespace {

template <typename T, typename F>
std::vector<std::string> names(const std::vector<T>& items, F to_name) {
  std::vector<std::string> out;
  for (const auto& i : items) out.push_back(to_name(i));
  return out;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SpiralStationary: return "spiral-stationary";
    case ExperimentKind::ProbeStationary: return "probe-stationary";
    case ExperimentKind::ProbeNonstationary: return "probe-nonstationary";
    case ExperimentKind::MetaComparison: return "meta-comparison";
  }
  return "probe-stationary";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "spiral-stationary") return ExperimentKind::SpiralStationary;
  if (name == "probe-stationary") return ExperimentKind::ProbeStationary;
  if (name == "probe-nonstationary") return ExperimentKind::ProbeNonstationary;
  if (name == "meta-comparison") return ExperimentKind::MetaComparison;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

StrategyKind strategy_of(ExperimentKind kind) {
  return kind == ExperimentKind::SpiralStationary ? StrategyKind::Spiral : StrategyKind::Probe;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Dpse: return "dpse";
    case Method::DpseLinit: return "dpse-linit";
    case Method::DpseCdist: return "dpse-cdist";
    case Method::Fixed: return "fixed";
    case Method::Pca: return "pca";
    case Method::Gmm: return "gmm";
    case Method::Nsga2: return "nsga2";
    case Method::Fomaml: return "fomaml";
    case Method::Reptile: return "reptile";
  }
  return "fixed";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::Dpse, Method::DpseLinit, Method::DpseCdist, Method::Fixed, Method::Pca, Method::Gmm,
                   Method::Nsga2, Method::Fomaml, Method::Reptile})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + name + "'");
}

bool is_dpse(Method m) { return m == Method::Dpse || m == Method::DpseLinit || m == Method::DpseCdist; }

bool method_allowed(Method m, ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SpiralStationary:
      return m == Method::Dpse || m == Method::DpseLinit || m == Method::Fixed || m == Method::Pca ||
             m == Method::Nsga2;
    case ExperimentKind::ProbeStationary:
      return is_dpse(m) || m == Method::Fixed || m == Method::Gmm || m == Method::Nsga2;
    case ExperimentKind::ProbeNonstationary:
      return is_dpse(m) || m == Method::Fixed || m == Method::Gmm;
    case ExperimentKind::MetaComparison:
      return m == Method::Dpse || m == Method::Fomaml || m == Method::Reptile;
  }
  return false;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("experiment needs at least one method");
  for (Method m : methods)
    if (!method_allowed(m, kind))
      throw ConfigError(fmt::format("method '{}' is not valid for experiment '{}'", to_string(m), to_string(kind)));
  if (m_train < 1 || n_train < 1 || m_test < 1 || n_test < 1 || horizon < 1 || eval_samples < 1)
    throw ConfigError("experiment counts must be positive");
  if (kind == ExperimentKind::MetaComparison && m_train < 2) throw ConfigError("meta comparison needs m_train >= 2");
  if (warmup < 1) throw ConfigError("warmup must be >= 1");
  if (processes.empty()) throw ConfigError("nonstationary experiment needs at least one process kind");
  for (int n : fomaml_n_meta)
    if (n < 1) throw ConfigError("fomaml n_meta must be positive");
  train_mixture.validate();
  test_mixture.validate();
  region.validate();
  timing.validate();
  pretrain.validate();
  finetune.validate();
  objective.validate();
  inversion.validate();
  nsga2.validate();
  process.validate();
  fomaml.validate();
  reptile.validate();
}

std::vector<std::uint64_t> ExperimentConfig::test_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (int i = 1; i <= m_test; ++i) out.push_back(static_cast<std::uint64_t>(i));
  return out;
}

ExperimentConfig preset(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::SpiralStationary:
      c.methods = {Method::Dpse, Method::Fixed, Method::Pca, Method::Nsga2};
      c.train_mixture.min_components = c.train_mixture.max_components = 6;
      c.test_mixture = c.train_mixture;
      c.nsga2 = Nsga2Config::spiral_preset();
      break;
    case ExperimentKind::ProbeStationary:
      c.methods = {Method::Dpse, Method::DpseLinit, Method::DpseCdist, Method::Fixed, Method::Gmm, Method::Nsga2};
      break;
    case ExperimentKind::ProbeNonstationary:
      c.methods = {Method::DpseLinit, Method::DpseCdist, Method::Fixed, Method::Gmm};
      c.m_test = 5;
      c.eval_samples = 2000;
      break;
    case ExperimentKind::MetaComparison:
      c.methods = {Method::Dpse, Method::Fomaml, Method::Reptile};
      c.m_train = 50;
      c.fomaml.trainer = TrainerKind::Fomaml;
      c.reptile.trainer = TrainerKind::Reptile;
      break;
  }
  c.fomaml.trainer = TrainerKind::Fomaml;
  c.reptile.trainer = TrainerKind::Reptile;
  return c;
}

nlohmann::json to_json(const SearchRegion& r) {
  return {{"half_extent", r.half_extent}, {"hole_clearance", r.hole_clearance}};
}

SearchRegion search_region_from_json(const nlohmann::json& j, SearchRegion r) {
  try {
    r.half_extent = j.value("half_extent", r.half_extent);
    r.hole_clearance = j.value("hole_clearance", r.hole_clearance);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed search region: ") + e.what());
  }
  r.validate();
  return r;
}

nlohmann::json to_json(const TimingConfig& t) {
  return {{"t_setup", t.t_setup}, {"t_probe", t.t_probe}, {"t_fail", t.t_fail}};
}

TimingConfig timing_config_from_json(const nlohmann::json& j, TimingConfig t) {
  try {
    t.t_setup = j.value("t_setup", t.t_setup);
    t.t_probe = j.value("t_probe", t.t_probe);
    t.t_fail = j.value("t_fail", t.t_fail);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed timing config: ") + e.what());
  }
  t.validate();
  return t;
}

nlohmann::json to_json(const GmmConfig& g) {
  return {{"components", g.components},
          {"max_iterations", g.max_iterations},
          {"tolerance", g.tolerance},
          {"covariance_floor", g.covariance_floor},
          {"seed", g.seed}};
}

GmmConfig gmm_config_from_json(const nlohmann::json& j, GmmConfig g) {
  try {
    g.components = j.value("components", g.components);
    g.max_iterations = j.value("max_iterations", g.max_iterations);
    g.tolerance = j.value("tolerance", g.tolerance);
    g.covariance_floor = j.value("covariance_floor", g.covariance_floor);
    g.seed = j.value("seed", g.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed gmm config: ") + e.what());
  }
  if (g.components < 1 || g.max_iterations < 1 || !(g.covariance_floor > 0.0) || !(g.tolerance >= 0.0))
    throw ConfigError("invalid gmm config");
  return g;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  j["methods"] = names(c.methods, [](Method m) { return to_string(m); });
  j["m_train"] = c.m_train;
  j["n_train"] = c.n_train;
  j["m_test"] = c.m_test;
  j["n_test"] = c.n_test;
  j["horizon"] = c.horizon;
  j["eval_samples"] = c.eval_samples;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["train_mixture"] = to_json(c.train_mixture);
  j["test_mixture"] = to_json(c.test_mixture);
  j["region"] = to_json(c.region);
  j["timing"] = to_json(c.timing);
  j["pretrain"] = to_json(c.pretrain);
  j["finetune"] = to_json(c.finetune);
  j["objective"] = to_json(c.objective);
  j["inversion"] = to_json(c.inversion);
  j["nsga2"] = to_json(c.nsga2);
  j["gmm"] = to_json(c.gmm);
  j["processes"] = names(c.processes, [](ProcessKind k) { return to_string(k); });
  j["process"] = to_json(c.process);
  j["warmup"] = c.warmup;
  j["fomaml"] = to_json(c.fomaml);
  j["reptile"] = to_json(c.reptile);
  j["fomaml_n_meta"] = c.fomaml_n_meta;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    if (!j.contains("kind")) throw ConfigError("experiment config needs a 'kind'");
    ExperimentConfig c = preset(experiment_kind_from_string(j["kind"].get<std::string>()));
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    c.m_train = j.value("m_train", c.m_train);
    c.n_train = j.value("n_train", c.n_train);
    c.m_test = j.value("m_test", c.m_test);
    c.n_test = j.value("n_test", c.n_test);
    c.horizon = j.value("horizon", c.horizon);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("train_mixture")) c.train_mixture = mixture_config_from_json(j["train_mixture"], c.train_mixture);
    if (j.contains("test_mixture")) c.test_mixture = mixture_config_from_json(j["test_mixture"], c.test_mixture);
    if (j.contains("region")) c.region = search_region_from_json(j["region"], c.region);
    if (j.contains("timing")) c.timing = timing_config_from_json(j["timing"], c.timing);
    if (j.contains("pretrain")) c.pretrain = train_config_from_json(j["pretrain"], c.pretrain);
    if (j.contains("finetune")) c.finetune = train_config_from_json(j["finetune"], c.finetune);
    if (j.contains("objective")) c.objective = objective_from_json(j["objective"], c.objective);
    if (j.contains("inversion")) c.inversion = inversion_config_from_json(j["inversion"], c.inversion);
    if (j.contains("nsga2")) c.nsga2 = nsga2_config_from_json(j["nsga2"], c.nsga2);
    if (j.contains("gmm")) c.gmm = gmm_config_from_json(j["gmm"], c.gmm);
    if (j.contains("processes")) {
      c.processes.clear();
      for (const auto& p : j["processes"]) c.processes.push_back(process_kind_from_string(p.get<std::string>()));
    }
    if (j.contains("process")) c.process = process_params_from_json(j["process"], c.process);
    c.warmup = j.value("warmup", c.warmup);
    if (j.contains("fomaml")) c.fomaml = train_config_from_json(j["fomaml"], c.fomaml);
    if (j.contains("reptile")) c.reptile = train_config_from_json(j["reptile"], c.reptile);
    if (j.contains("fomaml_n_meta")) c.fomaml_n_meta = j["fomaml_n_meta"].get<std::vector<int>>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

std::string hash_bytes(std::string_view bytes) {
  // FNV-1a, finalized with mix64.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", mix64(h));
}

std::string hash_json(const nlohmann::json& j) { return hash_bytes(j.dump()); }

std::string config_hash(const ExperimentConfig& cfg) { return hash_json(to_json(cfg)); }

std::string pretrain_key(const ExperimentConfig& cfg) {
  nlohmann::json j = {{"strategy", to_string(strategy_of(cfg.kind))},
                      {"m_train", cfg.m_train},
                      {"n_train", cfg.n_train},
                      {"seed", cfg.seed},
                      {"train_mixture", to_json(cfg.train_mixture)},
                      {"region", to_json(cfg.region)},
                      {"timing", to_json(cfg.timing)},
                      {"pretrain", to_json(cfg.pretrain)}};
  return hash_json(j);
}

}  // namespace dpse
