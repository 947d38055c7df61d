#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "dpse/cache.hpp"
#include "dpse/checkpoint.hpp"
#include "dpse/config.hpp"
#include "dpse/dataset_io.hpp"
#include "dpse/errors.hpp"
#include "dpse/harness.hpp"

namespace fs = std::filesystem;
using namespace dpse;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_train = false;
  int threads = 1;
  std::string experiment;
};

ExperimentConfig resolve_config(const Globals& g, ExperimentKind fallback) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    cfg = load_experiment_config(g.config);
  } else {
    cfg = preset(g.experiment.empty() ? fallback : experiment_kind_from_string(g.experiment));
  }
  if (g.seed) {
    std::cout << fmt::format("provenance: seed {} overridden by --seed {}\n", cfg.seed, *g.seed);
    cfg.seed = *g.seed;
  } else {
    std::cout << fmt::format("provenance: seed {} from {}\n", cfg.seed, g.config.empty() ? "preset" : g.config);
  }
  if (!g.out.empty()) cfg.output_dir = g.out;
  cfg.validate();
  return cfg;
}

RunOptions options(const Globals& g) {
  if (g.threads < 1) throw ConfigError("--threads must be >= 1");
  RunOptions o;
  o.no_train = g.no_train;
  o.threads = g.threads;
  o.log = &std::cerr;
  return o;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void print_csv_table(const fs::path& path, std::ostream& out) {
  std::ifstream in(path);
  if (!in) return;
  out << "== " << path.filename().string() << '\n';
  std::string line;
  while (std::getline(in, line)) {
    std::string row;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col++ == 0) continue;  // config hash column
      row += (first ? "" : " | ") + fmt::format("{:>14}", cell);
      first = false;
    }
    out << row << '\n';
  }
  out << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Differentiable search-strategy optimization: data generation, training, inversion and benchmarks"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config JSON");
  app.add_option("--seed", g.seed, "Overrides the config seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--no-train", g.no_train, "Use cached checkpoints only");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--experiment", g.experiment,
                 "Preset when no --config is given: spiral-stationary, probe-stationary, probe-nonstationary, "
                 "meta-comparison");

  auto* gen = app.add_subcommand("gen-data", "Generate and store the source dataset");
  auto* pre = app.add_subcommand("pretrain", "Pretrain (or load) the shadow model and export its checkpoint");
  auto* fine = app.add_subcommand("finetune", "Finetune a checkpoint on a task dataset");
  std::string checkpoint, dataset;
  std::uint64_t task = 1;
  fine->add_option("--checkpoint", checkpoint, "Pretrained checkpoint (default: cached)");
  fine->add_option("--dataset", dataset, "Task dataset (default: passive buffer of --task)");
  fine->add_option("--task", task, "Test distribution seed");
  auto* opt = app.add_subcommand("optimize", "Finetune and invert for one test distribution, write result JSON");
  std::string method_name = "dpse-cdist";
  opt->add_option("--checkpoint", checkpoint, "Finetuned or pretrained checkpoint to invert");
  opt->add_option("--task", task, "Test distribution seed");
  opt->add_option("--method", method_name, "dpse, dpse-linit or dpse-cdist");
  auto* stat = app.add_subcommand("run-stationary", "Stationary benchmark");
  auto* nonstat = app.add_subcommand("run-nonstationary", "Nonstationary continuous benchmark");
  auto* meta = app.add_subcommand("run-meta", "Transfer vs meta-learning comparison");
  auto* report = app.add_subcommand("report", "Print the tables of an output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*gen) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeStationary);
    const StrategyKind kind = strategy_of(cfg.kind);
    SourceDataset src = generate_source(kind, cfg.m_train, cfg.n_train, cfg.train_mixture, cfg.region, cfg.timing,
                                        cfg.seed, g.threads);
    const fs::path path = cfg.output_dir / fmt::format("source-{}.bin", pretrain_key(cfg));
    fs::create_directories(cfg.output_dir);
    save_source_dataset(path, src.tasks);
    std::ofstream csv(cfg.output_dir / "source-task0.csv");
    write_task_dataset_csv(csv, src.tasks.front());
    std::cout << fmt::format("wrote {} ({} tasks, {} records, checksum {})\n", path.string(), src.tasks.size(),
                             src.record_count(), source_checksum(src));
    return 0;
  }
  if (*pre) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeStationary);
    ShadowModel model = obtain_pretrained(cfg, options(g));
    fs::create_directories(cfg.output_dir);
    const fs::path path = cfg.output_dir / "pretrained.ckpt";
    save_checkpoint(path, model);
    std::cout << fmt::format("wrote {}\n", path.string());
    return 0;
  }
  if (*fine) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeStationary);
    ShadowModel base = checkpoint.empty() ? obtain_pretrained(cfg, options(g)) : load_checkpoint(checkpoint);
    TaskDataset ds = dataset.empty() ? passive_buffer(cfg, task) : load_task_dataset(dataset);
    LossLog log;
    ShadowModel model = finetune(base, std::span<const ExecutionRecord>(ds.records), cfg.finetune, &log);
    fs::create_directories(cfg.output_dir);
    save_checkpoint(cfg.output_dir / "finetuned.ckpt", model);
    std::ofstream loss(cfg.output_dir / "finetune-loss.csv");
    log.write_csv(loss);
    std::cout << fmt::format("wrote {}\n", (cfg.output_dir / "finetuned.ckpt").string());
    return 0;
  }
  if (*opt) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeStationary);
    const Method method = method_from_string(method_name);
    if (!is_dpse(method) || !method_allowed(method, cfg.kind))
      throw ConfigError("optimize needs a dpse method valid for the experiment");
    const StrategyKind kind = strategy_of(cfg.kind);
    const StrategyParams x0 = baseline_fixed(kind, cfg.region);
    ShadowModel model;
    if (!checkpoint.empty()) {
      model = load_checkpoint(checkpoint);
    } else {
      const TaskDataset buffer = passive_buffer(cfg, task);
      model = finetune(obtain_pretrained(cfg, options(g)), std::span<const ExecutionRecord>(buffer.records),
                       cfg.finetune);
    }
    const InversionResult res = invert(model, x0, method_objective(cfg, method, x0), cfg.inversion, cfg.timing);
    const OracleEstimate est =
        success_prob_oracle(res.params, test_mixture(cfg, task), cfg.eval_samples, task, cfg.region, cfg.timing);
    nlohmann::json j = to_json(res);
    j["method"] = method_name;
    j["task"] = task;
    j["config_hash"] = config_hash(cfg);
    j["oracle_success_rate"] = est.success_rate;
    j["oracle_mean_cycle_s"] = est.mean_duration;
    const fs::path path = cfg.output_dir / "result.json";
    write_json(path, j);
    std::cout << fmt::format("wrote {} (oracle success {:.4f})\n", path.string(), est.success_rate);
    return 0;
  }
  if (*stat) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeStationary);
    StationaryReport rep = run_stationary(cfg, options(g));
    write_summary_csv(std::cout, rep);
    return 0;
  }
  if (*nonstat) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::ProbeNonstationary);
    NonstationaryReport rep = run_nonstationary(cfg, options(g));
    write_failure_table_csv(std::cout, rep);
    return 0;
  }
  if (*meta) {
    ExperimentConfig cfg = resolve_config(g, ExperimentKind::MetaComparison);
    MetaReport rep = run_meta_comparison(cfg, options(g));
    for (const auto& [m, v] : rep.means()) std::cout << fmt::format("{}: {:.6f}\n", m, v);
    for (const auto& line : rep.ordering()) std::cout << line << '\n';
    return 0;
  }
  if (*report) {
    const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
    if (!fs::is_directory(dir)) throw ConfigError("no output directory '" + dir.string() + "'");
    for (const char* name : {"summary.csv", "failure_table.csv", "meta_summary.csv"}) print_csv_table(dir / name, std::cout);
    if (std::ifstream order(dir / "meta_ordering.txt"); order) std::cout << order.rdbuf();
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
