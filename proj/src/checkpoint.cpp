#include "dpse/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "dpse/binary_io.hpp"

namespace dpse {
namespace {
constexpr std::string_view kMagic{"DPSECKP\0", 8};
}

void write_checkpoint(std::ostream& out, const ShadowModel& model) {
  io::LeWriter w(out);
  w.magic(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(model.kind == StrategyKind::Probe ? 1u : 0u);
  w.u32(model.head == ShadowHead::Pointwise ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(model.weights.size()));
  for (const auto& t : model.weights) {
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
  }
  for (Eigen::Index i = 0; i < model.bounds.lower.size(); ++i) w.f64(model.bounds.lower(i));
  for (Eigen::Index i = 0; i < model.bounds.upper.size(); ++i) w.f64(model.bounds.upper(i));
  w.f64(model.tau_scale);
  w.u64(model.meta.tasks);
  w.u64(model.meta.records);
  w.u64(model.meta.seed);
  w.u32(static_cast<std::uint32_t>(model.meta.trainer.size()));
  w.magic(model.meta.trainer);
  for (const auto& t : model.weights)
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  if (!out) throw IntegrityError("failed writing checkpoint");
}

ShadowModel read_checkpoint(std::istream& in) {
  io::LeReader r(in);
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IntegrityError(fmt::format("checkpoint version {} unsupported (expected {})", version, kCheckpointVersion));
  ShadowModel model;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw IntegrityError("unknown strategy kind in checkpoint");
  model.kind = kind == 1 ? StrategyKind::Probe : StrategyKind::Spiral;
  const std::uint32_t head = r.u32();
  if (head > 1) throw IntegrityError("unknown shadow head in checkpoint");
  model.head = head == 1 ? ShadowHead::Pointwise : ShadowHead::Mlp;
  if (model.head == ShadowHead::Pointwise && model.kind != StrategyKind::Probe)
    throw IntegrityError("pointwise shadow head stored for a spiral model");
  const bool pointwise = model.head == ShadowHead::Pointwise;
  const std::uint32_t count = r.u32();
  if (count < 2 || count % 2 != (pointwise ? 1u : 0u) || count > 64)
    throw IntegrityError("implausible checkpoint tensor count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
  for (auto& s : shapes) {
    s.first = r.u32();
    s.second = r.u32();
    if (s.first == 0 || s.second == 0 || s.first > 1u << 16 || s.second > 1u << 16)
      throw IntegrityError("implausible checkpoint tensor shape");
  }
  const std::size_t layer_tensors = pointwise ? count - 1 : count;
  if (static_cast<int>(shapes.front().first) != model.network_input_dim() ||
      static_cast<int>(shapes[layer_tensors - 1].second) != model.network_output_dim())
    throw IntegrityError("checkpoint layer shapes do not match strategy kind");
  if (pointwise && (shapes.back().first != 1 || shapes.back().second != 1))
    throw IntegrityError("checkpoint shade radius must be 1x1");
  const int dim = model.input_dim();
  model.bounds.lower.resize(dim);
  model.bounds.upper.resize(dim);
  for (int i = 0; i < dim; ++i) model.bounds.lower(i) = r.f64();
  for (int i = 0; i < dim; ++i) model.bounds.upper(i) = r.f64();
  model.tau_scale = r.f64();
  model.meta.tasks = r.u64();
  model.meta.records = r.u64();
  model.meta.seed = r.u64();
  const std::uint32_t name_len = r.u32();
  if (name_len > 256) throw IntegrityError("implausible trainer name length");
  model.meta.trainer.resize(name_len);
  for (auto& c : model.meta.trainer) c = static_cast<char>(r.u8());
  for (const auto& [rows, cols] : shapes) {
    ad::Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.f64();
    if (!t.allFinite()) throw IntegrityError("checkpoint contains non-finite weights");
    model.weights.push_back(std::move(t));
  }
  for (std::size_t l = 0; l + 1 < layer_tensors; l += 2) {
    if (shapes[l + 1].first != 1 || shapes[l + 1].second != shapes[l].second)
      throw IntegrityError("checkpoint bias shape mismatch");
    if (l + 2 < layer_tensors && shapes[l + 2].first != shapes[l].second)
      throw IntegrityError("checkpoint layer chain mismatch");
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const ShadowModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, model);
}

ShadowModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace dpse
