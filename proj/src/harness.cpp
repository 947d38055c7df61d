#include "dpse/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "dpse/cache.hpp"
#include "dpse/dataset_io.hpp"
#include "dpse/errors.hpp"
#include "dpse/svg.hpp"

namespace dpse {
namespace {

constexpr std::uint64_t kTestTag = 0x74657374ull;
constexpr std::uint64_t kSourceTag = 0x737263ull;
constexpr std::uint64_t kOracleTag = 0x6f7261ull;
constexpr std::uint64_t kBufferTag = 0x627566ull;
constexpr std::uint64_t kNsgaTag = 0x6e7367ull;
constexpr std::uint64_t kProcessTag = 0x70726full;
constexpr std::uint64_t kMetaTag = 0x6d6574ull;

std::uint64_t derive(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return mix64(mix64(mix64(a) ^ b) ^ c);
}

void say(const RunOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << '\n' << std::flush;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

// Resolved configuration next to the results it produced.
void write_config(const ExperimentConfig& cfg, const std::string& hash) {
  auto out = open_out(cfg.output_dir / "config.json");
  out << nlohmann::json{{"config_hash", hash}, {"config", to_json(cfg)}}.dump(2) << '\n';
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<double> param_vector(const StrategyParams& p) { return {p.values.data(), p.values.data() + p.values.size()}; }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ArtifactCache cache_for(const ExperimentConfig& cfg, const RunOptions& opts) {
  return ArtifactCache(opts.cache_dir ? *opts.cache_dir : ArtifactCache::default_dir(cfg.output_dir));
}

bool needs_pretrained(const ExperimentConfig& cfg) {
  for (Method m : cfg.methods)
    if (is_dpse(m)) return true;
  return false;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mutex;
  std::size_t next = 0;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard lock(mutex);
          if (next >= n || error) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

GaussianMixture2D test_mixture(const ExperimentConfig& cfg, std::uint64_t seed) {
  return sample_mixture(derive(seed, kTestTag), cfg.test_mixture);
}

SourceDataset generate_source(StrategyKind kind, int m, int n, const MixtureConfig& mixture_cfg,
                              const SearchRegion& region, const TimingConfig& timing, std::uint64_t seed,
                              int threads) {
  if (m < 1) throw ConfigError("source dataset needs at least one task");
  SourceDataset source;
  source.tasks.resize(static_cast<std::size_t>(m));
  const ParamBounds bounds = parameter_bounds(kind, region);
  parallel_for(source.tasks.size(), threads, [&](std::size_t i) {
    const std::uint64_t task_seed = derive(seed, kSourceTag, i);
    HoleProcess process(sample_mixture(task_seed, mixture_cfg), ProcessParams{}, mix64(task_seed + 1));
    auto sampler = ParamsSampler::uniform(kind, bounds, mix64(task_seed + 2));
    source.tasks[i] = collect_task_dataset(process, sampler, n, region, timing);
  });
  return source;
}

std::string source_checksum(const SourceDataset& source) {
  std::ostringstream bytes;
  for (const auto& t : source.tasks) write_task_dataset(bytes, t);
  return hash_bytes(bytes.str());
}

ShadowModel obtain_pretrained(const ExperimentConfig& cfg, const RunOptions& opts) {
  const std::string key = pretrain_key(cfg);
  const ArtifactCache cache = cache_for(cfg, opts);
  if (auto cached = cache.load_model(key)) {
    say(opts, fmt::format("pretrained checkpoint {} loaded from cache", key));
    return *cached;
  }
  if (opts.no_train)
    throw ConfigError(fmt::format("--no-train: no cached checkpoint '{}'", cache.checkpoint_path(key).string()));
  const StrategyKind kind = strategy_of(cfg.kind);
  say(opts, fmt::format("generating source dataset: {} tasks x {} records ({})", cfg.m_train, cfg.n_train,
                        to_string(kind)));
  SourceDataset source = generate_source(kind, cfg.m_train, cfg.n_train, cfg.train_mixture, cfg.region, cfg.timing,
                                         cfg.seed, opts.threads);
  say(opts, "pretraining shadow model");
  LossLog log;
  TrainConfig tc = cfg.pretrain;
  tc.trainer = TrainerKind::PretrainFinetune;
  ShadowModel model = pretrain(source, parameter_bounds(kind, cfg.region), tc, &log);
  cache.store_model(key, model);
  {
    auto out = open_out(cache.dir() / ("pretrain-" + key + "-loss.csv"));
    log.write_csv(out);
  }
  say(opts, fmt::format("pretrained checkpoint {} stored", key));
  return model;
}

Objective method_objective(const ExperimentConfig& cfg, Method method, const StrategyParams& x0) {
  Objective obj = cfg.objective;
  obj.reference = x0;
  switch (method) {
    case Method::DpseLinit: obj.regularizer = Regularizer::Init; break;
    case Method::DpseCdist: obj.regularizer = Regularizer::CDist; break;
    default: obj.regularizer = Regularizer::None; break;
  }
  return obj;
}

TaskDataset passive_buffer(const ExperimentConfig& cfg, std::uint64_t seed) {
  const StrategyKind kind = strategy_of(cfg.kind);
  HoleProcess process(test_mixture(cfg, seed), ProcessParams{}, derive(seed, kBufferTag));
  auto sampler = ParamsSampler::fixed(baseline_fixed(kind, cfg.region));
  return collect_task_dataset(process, sampler, cfg.n_test, cfg.region, cfg.timing);
}

Eigen::Vector2d pattern_centroid(const StrategyParams& params) {
  if (params.kind == StrategyKind::Spiral) return SpiralParams::from_params(params).center;
  const ProbeParams p = ProbeParams::from_params(params);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& q : p.points) c += q;
  return c / kProbePoints;
}

// ---------------------------------------------------------------- stationary

std::vector<MethodSummary> StationaryReport::summary() const {
  std::vector<MethodSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MethodSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back({r.method});
      it = out.end() - 1;
    }
    it->mean_success += r.success_rate;
    it->mean_cycle += r.mean_cycle;
    it->mean_executions += static_cast<double>(r.executions);
    ++it->runs;
  }
  for (auto& s : out) {
    s.mean_success /= s.runs;
    s.mean_cycle /= s.runs;
    s.mean_executions /= s.runs;
  }
  return out;
}

std::optional<MethodSummary> StationaryReport::find(const std::string& method) const {
  for (const auto& s : summary())
    if (s.method == method) return s;
  return std::nullopt;
}

StationaryReport run_stationary(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.kind != ExperimentKind::SpiralStationary && cfg.kind != ExperimentKind::ProbeStationary)
    throw ConfigError("run_stationary needs a stationary experiment kind");
  const StrategyKind kind = strategy_of(cfg.kind);
  StationaryReport report;
  report.kind = cfg.kind;
  report.config_hash = config_hash(cfg);
  say(opts, fmt::format("config hash {}", report.config_hash));

  std::optional<ShadowModel> pretrained;
  if (needs_pretrained(cfg)) pretrained = obtain_pretrained(cfg, opts);
  const StrategyParams x0 = baseline_fixed(kind, cfg.region);
  const auto seeds = cfg.test_seeds();
  std::vector<std::vector<MetricsRow>> per_seed(seeds.size());
  std::vector<GaussianMixture2D> mixtures(seeds.size());

  parallel_for(seeds.size(), opts.threads, [&](std::size_t si) {
    const std::uint64_t seed = seeds[si];
    const GaussianMixture2D mixture = test_mixture(cfg, seed);
    mixtures[si] = mixture;
    ExecutionTally buffer_tally;
    const TaskDataset buffer = passive_buffer(cfg, seed);
    const std::uint64_t buffer_execs = buffer_tally.count();
    std::optional<ShadowModel> finetuned;

    for (Method method : cfg.methods) {
      const auto start = std::chrono::steady_clock::now();
      ExecutionTally tally;
      MetricsRow row;
      row.method = to_string(method);
      row.seed = seed;
      switch (method) {
        case Method::Fixed:
          row.params = x0;
          break;
        case Method::Dpse:
        case Method::DpseLinit:
        case Method::DpseCdist: {
          if (!finetuned) finetuned = finetune(*pretrained, std::span<const ExecutionRecord>(buffer.records), cfg.finetune);
          InversionConfig ic = cfg.inversion;
          ic.seed = derive(seed, cfg.inversion.seed);
          row.params = invert(*finetuned, x0, method_objective(cfg, method, x0), ic, cfg.timing).params;
          row.executions = buffer_execs;
          break;
        }
        case Method::Pca: {
          // Oracle-privileged: fitted to ground-truth hole poses, not to executions.
          Rng rng(derive(seed, kBufferTag, 1));
          std::vector<HolePose> holes;
          for (int i = 0; i < cfg.n_test; ++i) holes.push_back(sample_from(mixture, rng));
          try {
            row.params = baseline_pca_spiral(holes, cfg.region).to_params();
          } catch (const DegenerateInputError& e) {
            row.params = x0;
            row.note = std::string("fallback-fixed: ") + e.what();
          }
          row.privileged = true;
          break;
        }
        case Method::Gmm: {
          GmmConfig g = cfg.gmm;
          g.seed = derive(seed, cfg.gmm.seed);
          try {
            row.params = baseline_gmm_probe(buffer.records, cfg.region, g).to_params();
          } catch (const InsufficientDataError& e) {
            row.params = x0;
            row.note = std::string("fallback-grid: ") + e.what();
          }
          row.executions = buffer_execs;
          break;
        }
        case Method::Nsga2: {
          Nsga2Config nc = cfg.nsga2;
          nc.seed = derive(seed, kNsgaTag, cfg.nsga2.seed);
          nc.alpha_cycle = cfg.objective.alpha_cycle;
          nc.alpha_fail = cfg.objective.alpha_fail;
          const Nsga2Result res = nsga2_optimize(kind, mixture, nc, cfg.region, cfg.timing);
          row.params = res.best.params;
          break;
        }
        default:
          throw ConfigError("method not valid for a stationary experiment");
      }
      row.executions += tally.count();
      const OracleEstimate est =
          success_prob_oracle(row.params, mixture, cfg.eval_samples, derive(seed, kOracleTag), cfg.region, cfg.timing);
      row.success_rate = est.success_rate;
      row.mean_cycle = est.mean_duration;
      row.wall_clock = seconds_since(start);
      per_seed[si].push_back(std::move(row));
    }
    say(opts, fmt::format("seed {} done", seed));
  });
  for (auto& rows : per_seed)
    for (auto& r : rows) report.rows.push_back(std::move(r));

  if (opts.write_files) {
    const auto& dir = cfg.output_dir;
    write_config(cfg, report.config_hash);
    {
      auto out = open_out(dir / "metrics.csv");
      write_metrics_csv(out, report);
    }
    {
      auto out = open_out(dir / "summary.csv");
      write_summary_csv(out, report);
    }
    {
      auto out = open_out(dir / "timing.csv");
      out << "config_hash,method,seed,wall_clock_s\n";
      for (const auto& r : report.rows)
        out << fmt::format("{},{},{},{:.3f}\n", report.config_hash, csv_field(r.method), r.seed, r.wall_clock);
    }
    {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : report.rows)
        j.push_back({{"method", r.method}, {"seed", r.seed}, {"params", param_vector(r.params)}, {"note", r.note}});
      auto out = open_out(dir / "params.json");
      out << nlohmann::json{{"config_hash", report.config_hash}, {"config", to_json(cfg)}, {"results", j}}.dump(2)
          << '\n';
    }
    if (opts.write_plots) {
      for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        const std::size_t si = static_cast<std::size_t>(
            std::find(seeds.begin(), seeds.end(), r.seed) - seeds.begin());
        auto out = open_out(dir / "patterns" / fmt::format("seed{}_{}.svg", r.seed, r.method));
        out << plot_pattern(mixtures[si], r.params, cfg.region);
      }
    }
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const StationaryReport& report) {
  out << "config_hash,experiment,method,seed,success_rate,mean_cycle_time_s,executions,privileged,note\n";
  for (const auto& r : report.rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", report.config_hash, to_string(report.kind), csv_field(r.method),
                       r.seed, format_double(r.success_rate), format_double(r.mean_cycle), r.executions,
                       r.privileged ? 1 : 0, csv_field(r.note));
}

void write_summary_csv(std::ostream& out, const StationaryReport& report) {
  out << "config_hash,experiment,method,runs,mean_success_rate,mean_cycle_time_s,mean_executions\n";
  for (const auto& s : report.summary())
    out << fmt::format("{},{},{},{},{},{},{}\n", report.config_hash, to_string(report.kind), csv_field(s.method),
                       s.runs, format_double(s.mean_success), format_double(s.mean_cycle),
                       format_double(s.mean_executions));
}

// ------------------------------------------------------------- nonstationary

std::vector<FailureTableRow> NonstationaryReport::table() const {
  // (process, method) -> per-seed final cumulative failures
  std::vector<FailureTableRow> out;
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, int>> finals;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.process, r.method);
    if (finals.find(key) == finals.end()) out.push_back({r.process, r.method});
    finals[key][r.seed] = r.cumulative_failures;
  }
  for (auto& row : out) {
    const auto& per_seed = finals[{row.process, row.method}];
    double sum = 0.0;
    for (const auto& [seed, f] : per_seed) sum += f;
    row.mean_failures = sum / static_cast<double>(per_seed.size());
  }
  for (auto& row : out) {
    row.reduction_vs_fixed = std::numeric_limits<double>::quiet_NaN();
    for (const auto& other : out)
      if (other.process == row.process && other.method == "fixed" && other.mean_failures > 0.0)
        row.reduction_vs_fixed = 1.0 - row.mean_failures / other.mean_failures;
  }
  return out;
}

NonstationaryReport run_nonstationary(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.kind != ExperimentKind::ProbeNonstationary) throw ConfigError("run_nonstationary needs probe-nonstationary");
  NonstationaryReport report;
  report.config_hash = config_hash(cfg);
  say(opts, fmt::format("config hash {}", report.config_hash));
  std::shared_ptr<const ShadowModel> pretrained;
  if (needs_pretrained(cfg)) pretrained = std::make_shared<const ShadowModel>(obtain_pretrained(cfg, opts));
  const StrategyParams x0 = baseline_fixed(StrategyKind::Probe, cfg.region);
  const auto seeds = cfg.test_seeds();

  struct Job {
    ProcessKind process;
    std::uint64_t seed;
    Method method;
  };
  std::vector<Job> jobs;
  for (ProcessKind pk : cfg.processes)
    for (std::uint64_t s : seeds)
      for (Method m : cfg.methods) jobs.push_back({pk, s, m});
  std::vector<std::vector<StepRow>> results(jobs.size());
  std::vector<std::vector<PatternFrame>> frames(jobs.size());

  parallel_for(jobs.size(), opts.threads, [&](std::size_t ji) {
    const Job& job = jobs[ji];
    ProcessParams pp = cfg.process;
    pp.kind = job.process;
    HoleProcess process(test_mixture(cfg, job.seed), pp, derive(job.seed, kProcessTag));
    const std::string pname = to_string(job.process);
    const std::string mname = to_string(job.method);

    ContinuousConfig cc;
    cc.finetune = cfg.finetune;
    cc.objective = method_objective(cfg, job.method, x0);
    cc.inversion = cfg.inversion;
    cc.inversion.seed = derive(job.seed, cfg.inversion.seed);
    cc.region = cfg.region;
    cc.timing = cfg.timing;
    cc.warmup = cfg.warmup;
    std::optional<ContinuousState> state;
    if (is_dpse(job.method)) state.emplace(pretrained, x0);
    RingBuffer gmm_buffer(128);
    StrategyParams x = x0;
    int failures = 0;

    for (int t = 0; t < cfg.horizon; ++t) {
      StepRow row;
      row.process = pname;
      row.method = mname;
      row.seed = job.seed;
      row.t = t;
      const StrategyParams& current = state ? state->current : x;
      row.centroid = pattern_centroid(current);
      row.mixture_mean = process.current().mean();
      row.oracle_success = success_prob_oracle(current, process.current(), cfg.eval_samples,
                                               derive(job.seed, kOracleTag, static_cast<std::uint64_t>(t)),
                                               cfg.region, cfg.timing)
                               .success_rate;
      if (t % 20 == 0 || t + 1 == cfg.horizon) frames[ji].push_back({process.current(), current});
      ExecutionRecord rec;
      if (state) {
        rec = continuous_step(*state, process, cc);
      } else {
        rec = simulate(x, process.sample_hole(), cfg.region, cfg.timing);
        process.advance();
        if (job.method == Method::Gmm) {
          gmm_buffer.push(rec);
          GmmConfig g = cfg.gmm;
          g.seed = derive(job.seed, cfg.gmm.seed);
          const auto records = gmm_buffer.records();
          try {
            x = baseline_gmm_probe(records, cfg.region, g).to_params();
          } catch (const InsufficientDataError&) {
            // keeps the current pattern until enough successes are buffered
          }
        }
      }
      row.executed_success = rec.success;
      failures += rec.success ? 0 : 1;
      row.cumulative_failures = failures;
      results[ji].push_back(row);
    }
    say(opts, fmt::format("{} seed {} {}: {} failures over {} steps", pname, job.seed, mname, failures, cfg.horizon));
  });
  for (auto& rows : results)
    for (auto& r : rows) report.rows.push_back(std::move(r));

  if (opts.write_files) {
    const auto& dir = cfg.output_dir;
    write_config(cfg, report.config_hash);
    {
      auto out = open_out(dir / "steps.csv");
      write_steps_csv(out, report);
    }
    {
      auto out = open_out(dir / "failure_table.csv");
      write_failure_table_csv(out, report);
    }
    if (opts.write_plots) {
      for (std::size_t ji = 0; ji < jobs.size(); ++ji) {
        if (frames[ji].empty()) continue;
        const auto& f = frames[ji];
        std::vector<PatternFrame> rest(f.begin() + 1, f.end());
        auto out = open_out(dir / "patterns" /
                            fmt::format("{}_seed{}_{}.svg", to_string(jobs[ji].process), jobs[ji].seed,
                                        to_string(jobs[ji].method)));
        out << plot_pattern(f.front().mixture, f.front().params, cfg.region, rest);
      }
    }
  }
  return report;
}

void write_steps_csv(std::ostream& out, const NonstationaryReport& report) {
  out << "config_hash,process,method,seed,t,oracle_success,executed_success,cumulative_failures,centroid_x,"
         "centroid_y,mixture_mean_x,mixture_mean_y\n";
  for (const auto& r : report.rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", report.config_hash, r.process, csv_field(r.method),
                       r.seed, r.t, format_double(r.oracle_success), r.executed_success ? 1 : 0,
                       r.cumulative_failures, format_double(r.centroid.x()), format_double(r.centroid.y()),
                       format_double(r.mixture_mean.x()), format_double(r.mixture_mean.y()));
}

void write_failure_table_csv(std::ostream& out, const NonstationaryReport& report) {
  out << "config_hash,process,method,mean_cumulative_failures,reduction_vs_fixed\n";
  for (const auto& r : report.table())
    out << fmt::format("{},{},{},{},{}\n", report.config_hash, r.process, csv_field(r.method),
                       format_double(r.mean_failures),
                       std::isnan(r.reduction_vs_fixed) ? std::string("") : format_double(r.reduction_vs_fixed));
}

// ---------------------------------------------------------------------- meta

std::vector<std::pair<std::string, double>> MetaReport::means() const {
  std::vector<std::pair<std::string, double>> out;
  std::vector<int> counts;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.method; });
    if (it == out.end()) {
      out.emplace_back(r.method, 0.0);
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->second += r.heldout_loss;
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].second /= counts[i];
  return out;
}

std::vector<std::string> MetaReport::ordering() const {
  const auto m = means();
  auto get = [&](const std::string& name) -> std::optional<double> {
    for (const auto& [k, v] : m)
      if (k == name) return v;
    return std::nullopt;
  };
  std::vector<std::string> lines;
  auto compare = [&](const std::string& a, const std::string& b) {
    const auto va = get(a), vb = get(b);
    if (!va || !vb) return;
    lines.push_back(fmt::format("{} <= {}: {} ({:.6f} vs {:.6f})", a, b, *va <= *vb ? "yes" : "no", *va, *vb));
  };
  compare("dpse", "fomaml-128");
  compare("dpse", "reptile-128");
  compare("fomaml-128", "fomaml-5");
  return lines;
}

MetaReport run_meta_comparison(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.kind != ExperimentKind::MetaComparison) throw ConfigError("run_meta_comparison needs meta-comparison");
  MetaReport report;
  report.config_hash = config_hash(cfg);
  const StrategyKind kind = StrategyKind::Probe;
  const ParamBounds bounds = parameter_bounds(kind, cfg.region);
  say(opts, fmt::format("config hash {}", report.config_hash));
  const SourceDataset source = generate_source(kind, cfg.m_train, cfg.n_train, cfg.train_mixture, cfg.region,
                                               cfg.timing, cfg.seed, opts.threads);
  report.source_checksum = source_checksum(source);
  say(opts, fmt::format("source dataset checksum {} shared by all methods", report.source_checksum));

  struct Trained {
    std::string label;
    int n_meta;
    ShadowModel model;
  };
  std::vector<Trained> models;
  for (Method m : cfg.methods) {
    if (m == Method::Dpse) {
      TrainConfig tc = cfg.pretrain;
      tc.trainer = TrainerKind::PretrainFinetune;
      models.push_back({"dpse", cfg.n_test, pretrain(source, bounds, tc)});
    } else if (m == Method::Fomaml) {
      for (int n : cfg.fomaml_n_meta) {
        TrainConfig tc = cfg.fomaml;
        tc.trainer = TrainerKind::Fomaml;
        tc.n_meta = n;
        models.push_back({fmt::format("fomaml-{}", n), n, meta_train_fomaml(source, bounds, tc)});
      }
    } else if (m == Method::Reptile) {
      TrainConfig tc = cfg.reptile;
      tc.trainer = TrainerKind::Reptile;
      models.push_back({fmt::format("reptile-{}", tc.n_meta), tc.n_meta, meta_train_reptile(source, bounds, tc)});
    }
    say(opts, fmt::format("{} trained", to_string(m)));
  }

  const auto tasks = cfg.test_seeds();
  std::vector<std::vector<MetaRow>> per_task(tasks.size());
  parallel_for(tasks.size(), opts.threads, [&](std::size_t ti) {
    const std::uint64_t task = tasks[ti];
    const std::uint64_t task_seed = derive(task, kMetaTag);
    HoleProcess process(test_mixture(cfg, task), ProcessParams{}, task_seed);
    auto sampler = ParamsSampler::uniform(kind, bounds, mix64(task_seed + 1));
    const TaskDataset adaptation = collect_task_dataset(process, sampler, cfg.n_test, cfg.region, cfg.timing);
    const TaskDataset held_out = collect_task_dataset(process, sampler, cfg.n_test, cfg.region, cfg.timing);
    for (const auto& t : models) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(t.n_meta), adaptation.records.size());
      const double loss =
          adapted_loss(t.model, std::span<const ExecutionRecord>(adaptation.records.data(), n), held_out.records,
                       cfg.finetune);
      per_task[ti].push_back({t.label, t.n_meta, task, loss});
    }
  });
  for (auto& rows : per_task)
    for (auto& r : rows) report.rows.push_back(std::move(r));

  if (opts.write_files) {
    write_config(cfg, report.config_hash);
    auto out = open_out(cfg.output_dir / "meta.csv");
    write_meta_csv(out, report);
    auto summary = open_out(cfg.output_dir / "meta_summary.csv");
    summary << "config_hash,method,mean_heldout_loss\n";
    for (const auto& [method, mean] : report.means())
      summary << fmt::format("{},{},{}\n", report.config_hash, csv_field(method), format_double(mean));
    auto order = open_out(cfg.output_dir / "meta_ordering.txt");
    order << fmt::format("config_hash {}\nsource_checksum {}\nseed {}\n", report.config_hash, report.source_checksum,
                         cfg.seed);
    for (const auto& line : report.ordering()) order << line << '\n';
  }
  return report;
}

void write_meta_csv(std::ostream& out, const MetaReport& report) {
  out << "config_hash,source_checksum,method,n_meta,task,heldout_loss\n";
  for (const auto& r : report.rows)
    out << fmt::format("{},{},{},{},{},{}\n", report.config_hash, report.source_checksum, csv_field(r.method),
                       r.n_meta, r.task, format_double(r.heldout_loss));
}

}  // namespace dpse
