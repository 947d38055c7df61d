#include "dpse/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "dpse/binary_io.hpp"

namespace dpse {
namespace {

constexpr std::string_view kTaskMagic{"DPSETDS\0", 8};
constexpr std::string_view kSourceMagic{"DPSESRC\0", 8};

void write_mixture(io::LeWriter& w, const GaussianMixture2D& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& c : m.components) {
    w.f64(c.weight);
    w.f64(c.mean(0));
    w.f64(c.mean(1));
    w.f64(c.covariance(0, 0));
    w.f64(c.covariance(0, 1));
    w.f64(c.covariance(1, 0));
    w.f64(c.covariance(1, 1));
  }
}

GaussianMixture2D read_mixture(io::LeReader& r) {
  GaussianMixture2D m;
  const std::uint32_t n = r.u32();
  if (n > 4096) throw IntegrityError("implausible mixture component count");
  for (std::uint32_t i = 0; i < n; ++i) {
    GaussianComponent c;
    c.weight = r.f64();
    c.mean(0) = r.f64();
    c.mean(1) = r.f64();
    c.covariance(0, 0) = r.f64();
    c.covariance(0, 1) = r.f64();
    c.covariance(1, 0) = r.f64();
    c.covariance(1, 1) = r.f64();
    m.components.push_back(c);
  }
  return m;
}

}  // namespace

void write_task_dataset(std::ostream& out, const TaskDataset& ds) {
  io::LeWriter w(out);
  const int dim = param_dim(ds.kind);
  w.magic(kTaskMagic);
  w.u32(kDatasetVersion);
  w.u32(ds.kind == StrategyKind::Probe ? 1u : 0u);
  w.u64(ds.records.size());
  w.u32(static_cast<std::uint32_t>(dim));
  write_mixture(w, ds.mixture);
  for (const auto& rec : ds.records) {
    if (rec.params.kind != ds.kind || rec.params.values.size() != dim)
      throw ContractError("record strategy kind does not match dataset");
    for (int i = 0; i < dim; ++i) w.f64(rec.params.values(i));
    w.f64(rec.hole.position(0));
    w.f64(rec.hole.position(1));
    w.f64(rec.duration);
    w.f64(rec.contact_parameter.value_or(std::numeric_limits<double>::quiet_NaN()));
    w.i32(rec.success_index.value_or(0));
    w.u8(rec.success ? 1 : 0);
    for (const auto& p : rec.probes) w.u8(static_cast<std::uint8_t>((p.probed ? 1 : 0) | (p.hit ? 2 : 0)));
  }
  if (!out) throw IntegrityError("failed writing task dataset");
}

TaskDataset read_task_dataset(std::istream& in) {
  io::LeReader r(in);
  r.expect_magic(kTaskMagic);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw IntegrityError(fmt::format("task dataset version {} unsupported (expected {})", version, kDatasetVersion));
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw IntegrityError("unknown strategy kind in task dataset");
  TaskDataset ds;
  ds.kind = kind == 1 ? StrategyKind::Probe : StrategyKind::Spiral;
  const std::uint64_t n = r.u64();
  const std::uint32_t dim = r.u32();
  if (static_cast<int>(dim) != param_dim(ds.kind)) throw IntegrityError("param dimension does not match strategy kind");
  ds.mixture = read_mixture(r);
  ds.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
  for (std::uint64_t i = 0; i < n; ++i) {
    ExecutionRecord rec;
    rec.params.kind = ds.kind;
    rec.params.values.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) rec.params.values(d) = r.f64();
    rec.hole.position(0) = r.f64();
    rec.hole.position(1) = r.f64();
    rec.duration = r.f64();
    const double contact = r.f64();
    if (!std::isnan(contact)) rec.contact_parameter = contact;
    const std::int32_t idx = r.i32();
    if (idx != 0) rec.success_index = idx;
    rec.success = r.u8() != 0;
    for (auto& p : rec.probes) {
      const std::uint8_t flags = r.u8();
      p.probed = (flags & 1) != 0;
      p.hit = (flags & 2) != 0;
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void save_task_dataset(const std::filesystem::path& path, const TaskDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  write_task_dataset(out, ds);
}

TaskDataset load_task_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return read_task_dataset(in);
}

void save_source_dataset(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  io::LeWriter w(out);
  w.magic(kSourceMagic);
  w.u32(kDatasetVersion);
  w.u64(tasks.size());
  for (const auto& t : tasks) write_task_dataset(out, t);
}

std::vector<TaskDataset> load_source_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  io::LeReader r(in);
  r.expect_magic(kSourceMagic);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw IntegrityError(fmt::format("source dataset version {} unsupported", version));
  const std::uint64_t m = r.u64();
  std::vector<TaskDataset> tasks;
  for (std::uint64_t i = 0; i < m; ++i) tasks.push_back(read_task_dataset(in));
  return tasks;
}

void write_task_dataset_csv(std::ostream& out, const TaskDataset& ds) {
  const int dim = param_dim(ds.kind);
  std::string header;
  for (int i = 0; i < dim; ++i) header += fmt::format("x{},", i);
  header += "hole_x,hole_y,success,success_index,contact_parameter,duration";
  for (int k = 1; k <= kProbePoints; ++k) header += fmt::format(",probed{0},hit{0}", k);
  out << header << '\n';
  for (const auto& rec : ds.records) {
    std::string row;
    for (int i = 0; i < dim; ++i) row += fmt::format("{:.17g},", rec.params.values(i));
    row += fmt::format("{:.17g},{:.17g},{},{},", rec.hole.position(0), rec.hole.position(1), rec.success ? 1 : 0,
                       rec.success_index.value_or(0));
    row += rec.contact_parameter ? fmt::format("{:.17g}", *rec.contact_parameter) : std::string();
    row += fmt::format(",{:.17g}", rec.duration);
    for (const auto& p : rec.probes) row += fmt::format(",{},{}", p.probed ? 1 : 0, p.hit ? 1 : 0);
    out << row << '\n';
  }
}

}  // namespace dpse
