#include "dpse/adgraph.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace dpse::ad {
namespace {

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw ContractError("operation on a detached Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(Var a, Var b, Op op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op_name(op), a.rows(), a.cols(), b.rows(),
                                    b.cols()));
}

Tensor scalar_tensor(double v) {
  Tensor t(1, 1);
  t(0, 0) = v;
  return t;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <typename Fn>
Var unary(Var a, Op op, Tensor value, Fn local_grad) {
  const std::size_t ia = a.id();
  return tape_of(a).push(op, {ia}, std::move(value), [ia, local_grad](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, local_grad(t, g));
  });
}

// Smooth minimum of one row (or all values) with its softmin weights.
double smooth_min_of(const Eigen::Ref<const Eigen::RowVectorXd>& row, double tau, Eigen::RowVectorXd* weights) {
  const double m = row.minCoeff();
  Eigen::RowVectorXd e = (-(row.array() - m) / tau).exp().matrix();
  const double s = e.sum();
  if (weights) *weights = e / s;
  return m - tau * std::log(s);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::ClampMin: return "clamp_min";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Reshape: return "reshape";
    case Op::L1Norm: return "l1_norm";
    case Op::L1Rows: return "l1_rows";
    case Op::Min: return "min";
    case Op::MinRows: return "min_rows";
    case Op::SmoothMin: return "smooth_min";
    case Op::SmoothMinRows: return "smooth_min_rows";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("value() of a detached Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ContractError("scalar() on a non-scalar tensor");
  return v(0, 0);
}

Var Tape::leaf(Tensor value) {
  if (!value.allFinite()) throw NumericError("leaf tensor contains non-finite values");
  nodes_.push_back(TapeNode{Op::Leaf, {}, std::move(value), true, {}});
  grads_.emplace_back();
  has_grad_.push_back(false);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.allFinite()) throw NumericError("constant tensor contains non-finite values");
  nodes_.push_back(TapeNode{Op::Constant, {}, std::move(value), false, {}});
  grads_.emplace_back();
  has_grad_.push_back(false);
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Op op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  if (!value.allFinite()) throw NumericError(fmt::format("{} produced non-finite values", op_name(op)));
  bool rg = false;
  for (std::size_t i : inputs) rg = rg || nodes_[i].requires_grad;
  nodes_.push_back(TapeNode{op, std::move(inputs), std::move(value), rg, rg ? std::move(backward) : BackwardFn{}});
  grads_.emplace_back();
  has_grad_.push_back(false);
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ContractError("backward root belongs to another tape");
  if (root.value().size() != 1) throw ContractError("backward requires a scalar (1x1) root");
  std::fill(has_grad_.begin(), has_grad_.end(), false);
  for (auto& g : grads_) g.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  grads_[root.id()] = Tensor::Ones(1, 1);
  has_grad_[root.id()] = true;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    if (!has_grad_[i] || !nodes_[i].backward) continue;
    nodes_[i].backward(*this, grads_[i]);
  }
}

Tensor Tape::grad(Var v) const {
  if (has_grad_[v.id()]) return grads_[v.id()];
  return Tensor::Zero(nodes_[v.id()].value.rows(), nodes_[v.id()].value.cols());
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, Op::Add);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(Op::Add, {ia, ib}, a.value() + b.value(), [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, Op::Sub);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(Op::Sub, {ia, ib}, a.value() - b.value(), [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, Op::Mul);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(Op::Mul, {ia, ib}, a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double factor) {
  return unary(a, Op::Scale, a.value() * factor, [factor](Tape&, const Tensor& g) { return g * factor; });
}

Var shift(Var a, double offset) {
  return unary(a, Op::Shift, (a.value().array() + offset).matrix(), [](Tape&, const Tensor& g) { return g; });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows())
    throw ContractError(fmt::format("matmul: inner dimensions {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(Op::MatMul, {ia, ib}, a.value() * b.value(), [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var affine(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x, weight);
  if (bias.tape() != &t) throw ContractError("affine: bias on a different tape");
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols())
    throw ContractError(fmt::format("affine: shapes x {}x{}, W {}x{}, b {}x{}", x.rows(), x.cols(), weight.rows(),
                                    weight.cols(), bias.rows(), bias.cols()));
  Tensor out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return t.push(Op::Affine, {ix, iw, ib}, std::move(out), [ix, iw, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Var tanh(Var a) {
  Tensor y = a.value().array().tanh().matrix();
  const std::size_t self = tape_of(a).size();
  return unary(a, Op::Tanh, std::move(y), [self](Tape& t, const Tensor& g) {
    return (g.array() * (1.0 - t.value(self).array().square())).matrix();
  });
}

Var sigmoid(Var a) {
  Tensor y = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t self = tape_of(a).size();
  return unary(a, Op::Sigmoid, std::move(y), [self](Tape& t, const Tensor& g) {
    const auto& s = t.value(self).array();
    return (g.array() * s * (1.0 - s)).matrix();
  });
}

Var softplus(Var a) {
  Tensor y = a.value().unaryExpr([](double x) { return stable_softplus(x); });
  const std::size_t ia = a.id();
  return unary(a, Op::Softplus, std::move(y), [ia](Tape& t, const Tensor& g) {
    return g.cwiseProduct(t.value(ia).unaryExpr([](double x) { return stable_sigmoid(x); }));
  });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NumericError("log of a non-positive value");
  const std::size_t ia = a.id();
  return unary(a, Op::Log, a.value().array().log().matrix(),
               [ia](Tape& t, const Tensor& g) { return g.cwiseQuotient(t.value(ia)); });
}

Var exp(Var a) {
  const std::size_t self = tape_of(a).size();
  return unary(a, Op::Exp, a.value().array().exp().matrix(),
               [self](Tape& t, const Tensor& g) { return g.cwiseProduct(t.value(self)); });
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw NumericError("sqrt of a negative value");
  const std::size_t self = tape_of(a).size();
  return unary(a, Op::Sqrt, a.value().array().sqrt().matrix(), [self](Tape& t, const Tensor& g) {
    return (0.5 * g.array() / t.value(self).array()).matrix();
  });
}

Var square(Var a) {
  const std::size_t ia = a.id();
  return unary(a, Op::Square, a.value().array().square().matrix(),
               [ia](Tape& t, const Tensor& g) { return (2.0 * g.array() * t.value(ia).array()).matrix(); });
}

Var clamp_min(Var a, double lower) {
  const std::size_t ia = a.id();
  return unary(a, Op::ClampMin, a.value().cwiseMax(lower), [ia, lower](Tape& t, const Tensor& g) {
    return (t.value(ia).array() > lower).select(g.array(), 0.0).matrix();
  });
}

Var sum(Var a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return unary(a, Op::Sum, scalar_tensor(a.value().sum()),
               [r, c](Tape&, const Tensor& g) { return Tensor::Constant(r, c, g(0, 0)); });
}

Var mean(Var a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  if (a.value().size() == 0) throw ContractError("mean of an empty tensor");
  const double n = static_cast<double>(a.value().size());
  return unary(a, Op::Mean, scalar_tensor(a.value().sum() / n),
               [r, c, n](Tape&, const Tensor& g) { return Tensor::Constant(r, c, g(0, 0) / n); });
}

Var sum_rows(Var a) {
  const Eigen::Index c = a.cols();
  Tensor y = a.value().rowwise().sum();
  return unary(a, Op::SumRows, std::move(y), [c](Tape&, const Tensor& g) { return g.replicate(1, c); });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("concat: operands on different tapes");
    if (p.rows() != rows) throw ContractError("concat: row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.push(Op::Concat, ids, std::move(out), [ids, widths](Tape& t, const Tensor& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ContractError(fmt::format("slice [{}, {}) out of {} columns", start, start + count, a.cols()));
  const Eigen::Index r = a.rows(), c = a.cols();
  return unary(a, Op::Slice, a.value().middleCols(start, count), [r, c, start, count](Tape&, const Tensor& g) {
    Tensor full = Tensor::Zero(r, c);
    full.middleCols(start, count) = g;
    return full;
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index r = a.rows(), c = a.cols();
  if (rows < 0 || cols < 0 || rows * cols != r * c)
    throw ContractError(fmt::format("reshape {}x{} to {}x{}", r, c, rows, cols));
  Tensor y = Eigen::Map<const Tensor>(a.value().data(), rows, cols);
  return unary(a, Op::Reshape, std::move(y), [r, c](Tape&, const Tensor& g) {
    return Tensor(Eigen::Map<const Tensor>(g.data(), r, c));
  });
}

Var l1_norm(Var a) {
  const std::size_t ia = a.id();
  return unary(a, Op::L1Norm, scalar_tensor(a.value().cwiseAbs().sum()), [ia](Tape& t, const Tensor& g) {
    return (t.value(ia).array().sign() * g(0, 0)).matrix();
  });
}

Var l1_rows(Var a) {
  const std::size_t ia = a.id();
  Tensor y = a.value().cwiseAbs().rowwise().sum();
  return unary(a, Op::L1Rows, std::move(y), [ia](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    return (x.array().sign() * g.replicate(1, x.cols()).array()).matrix();
  });
}

Var min_reduce(Var a) {
  if (a.value().size() == 0) throw ContractError("min of an empty tensor");
  Eigen::Index r = 0, c = 0;
  const double m = a.value().minCoeff(&r, &c);
  // Eigen scans a row-major matrix in storage order, so (r, c) is the first argmin.
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return unary(a, Op::Min, scalar_tensor(m), [rows, cols, r, c](Tape&, const Tensor& g) {
    Tensor out = Tensor::Zero(rows, cols);
    out(r, c) = g(0, 0);
    return out;
  });
}

Var min_rows(Var a) {
  if (a.cols() == 0) throw ContractError("min_rows of zero columns");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Tensor y(rows, 1);
  std::vector<Eigen::Index> arg(rows);
  for (Eigen::Index i = 0; i < rows; ++i) y(i, 0) = a.value().row(i).minCoeff(&arg[i]);
  return unary(a, Op::MinRows, std::move(y), [rows, cols, arg](Tape&, const Tensor& g) {
    Tensor out = Tensor::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) out(i, arg[i]) = g(i, 0);
    return out;
  });
}

Var smooth_min(Var a, double tau) {
  if (!(tau > 0.0)) throw ContractError("smooth_min needs tau > 0");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Eigen::RowVectorXd flat = Eigen::Map<const Eigen::RowVectorXd>(a.value().data(), a.value().size());
  Eigen::RowVectorXd w;
  const double v = smooth_min_of(flat, tau, &w);
  return unary(a, Op::SmoothMin, scalar_tensor(v), [rows, cols, w](Tape&, const Tensor& g) {
    Tensor out = Eigen::Map<const Tensor>(w.data(), rows, cols) * g(0, 0);
    return out;
  });
}

Var smooth_min_rows(Var a, double tau) {
  if (!(tau > 0.0)) throw ContractError("smooth_min_rows needs tau > 0");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Tensor y(rows, 1);
  Tensor w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::RowVectorXd wi;
    y(i, 0) = smooth_min_of(a.value().row(i), tau, &wi);
    w.row(i) = wi;
  }
  return unary(a, Op::SmoothMinRows, std::move(y), [w, cols](Tape&, const Tensor& g) {
    return (w.array() * g.replicate(1, cols).array()).matrix();
  });
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ContractError("adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Tensor::Zero(p.rows(), p.cols()));
      state.second_moment.push_back(Tensor::Zero(p.rows(), p.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw ContractError("adam_step: state/params count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw ContractError("adam_step: gradient shape mismatch");
    if (!grads[i].allFinite()) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    params[i].array() -= cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
  }
}

}  // namespace dpse::ad
