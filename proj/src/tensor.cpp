#include "cnav/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cnav/params.hpp"

namespace cnav {

namespace {

std::size_t product(const Shape& s) {
  std::size_t p = 1;
  for (auto d : s) p *= d;
  return p;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a) {
  throw std::invalid_argument(std::string(op) + ": unsupported shape " + shape_str(a));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
  out << ']';
  return out.str();
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("DenseArray: zero-sized dimension");
}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("DenseArray: zero-sized dimension");
  if (product(shape_) != data_.size())
    throw std::invalid_argument("DenseArray: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " values");
}

DenseArray DenseArray::vector(std::vector<double> values) {
  Shape s{values.size()};
  return DenseArray(std::move(s), std::move(values));
}

DenseArray DenseArray::scalar(double v) { return DenseArray(Shape{1}, std::vector<double>{v}); }

DenseArray DenseArray::zeros_like(const DenseArray& other) { return DenseArray(other.shape_); }

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

namespace kernels {

void matvec(const DenseArray& a, std::span<const double> x, std::span<double> out) {
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const double* p = a.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    const double* row = p + r * k;
    for (std::size_t c = 0; c < k; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s);
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    s += out[i];
  }
  for (auto& v : out) v /= s;
}

}  // namespace kernels

// ---------------------------------------------------------------------------

const Tape::Node& Tape::node(Var v, const char* op) const {
  if (!v.valid() || v.id >= nodes_.size())
    throw std::logic_error(std::string(op) + ": variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const DenseArray& Tape::value(Var v) const {
  node(v, "value");
  return val(v.id);
}

double Tape::scalar(Var v) const {
  const DenseArray& a = value(v);
  if (a.size() != 1) throw std::invalid_argument("scalar: value has shape " + shape_str(a.shape()));
  return a[0];
}

Var Tape::constant(DenseArray value) {
  Node n{.op = Op::Constant};
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_slots_.find(name); it != param_slots_.end()) return Var{it->second};
  Node n{.op = Op::Param, .needs_grad = true};
  n.ref = &store.value(name);
  n.name = name;
  Var v = push(std::move(n));
  param_slots_.emplace(name, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a, "matmul");
  const Node& nb = node(b, "matmul");
  const DenseArray& A = val(a.id);
  const DenseArray& B = val(b.id);
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.shape()[1] != B.shape()[0])
    shape_error("matmul", A.shape(), B.shape());
  const std::size_t m = A.shape()[0], k = A.shape()[1];
  Node n{.op = Op::MatMul, .needs_grad = na.needs_grad || nb.needs_grad};
  n.inputs = {a.id, b.id};
  if (B.rank() == 1) {
    n.owned = DenseArray(Shape{m});
    kernels::matvec(A, B.data(), n.owned.data());
  } else {
    const std::size_t cols = B.shape()[1];
    n.owned = DenseArray(Shape{m, cols});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t i = 0; i < k; ++i) {
        const double ar = A.at(r, i);
        for (std::size_t c = 0; c < cols; ++c) n.owned.at(r, c) += ar * B.at(i, c);
      }
  }
  return push(std::move(n));
}

namespace {
template <typename F>
DenseArray zip(const DenseArray& a, const DenseArray& b, const char* op, F f) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
  DenseArray out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}
}  // namespace

Var Tape::add(Var a, Var b) {
  Node n{.op = Op::Add, .needs_grad = node(a, "add").needs_grad || node(b, "add").needs_grad};
  n.inputs = {a.id, b.id};
  n.owned = zip(val(a.id), val(b.id), "add", [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  Node n{.op = Op::Sub, .needs_grad = node(a, "sub").needs_grad || node(b, "sub").needs_grad};
  n.inputs = {a.id, b.id};
  n.owned = zip(val(a.id), val(b.id), "sub", [](double x, double y) { return x - y; });
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  Node n{.op = Op::Mul, .needs_grad = node(a, "mul").needs_grad || node(b, "mul").needs_grad};
  n.inputs = {a.id, b.id};
  n.owned = zip(val(a.id), val(b.id), "mul", [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Node n{.op = Op::Scale, .needs_grad = node(a, "scale").needs_grad};
  n.inputs = {a.id};
  n.scalar_arg = factor;
  n.owned = val(a.id);
  for (auto& x : n.owned.data()) x *= factor;
  return push(std::move(n));
}

Var Tape::unary(Unary kind, Var a) {
  Node n{.op = Op::Unary, .needs_grad = node(a, "unary").needs_grad, .unary_kind = kind};
  n.inputs = {a.id};
  n.owned = val(a.id);
  if (kind == Unary::Tanh) {
    for (auto& x : n.owned.data()) x = std::tanh(x);
  } else {
    for (auto& x : n.owned.data()) x = 1.0 / (1.0 + std::exp(-x));
  }
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Node n{.op = Op::Concat};
  std::vector<double> data;
  for (Var p : parts) {
    const Node& np = node(p, "concat");
    const DenseArray& v = val(p.id);
    if (v.rank() != 1) shape_error("concat", v.shape());
    n.needs_grad = n.needs_grad || np.needs_grad;
    n.inputs.push_back(p.id);
    data.insert(data.end(), v.data().begin(), v.data().end());
  }
  n.owned = DenseArray::vector(std::move(data));
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  const Node& na = node(a, "slice");
  const DenseArray& v = val(a.id);
  if (v.rank() != 1 || length == 0 || offset + length > v.size())
    throw std::invalid_argument("slice: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + length) + ") invalid for shape " +
                                shape_str(v.shape()));
  Node n{.op = Op::Slice, .needs_grad = na.needs_grad};
  n.inputs = {a.id};
  n.index_arg = offset;
  n.owned = DenseArray::vector(
      std::vector<double>(v.data().begin() + offset, v.data().begin() + offset + length));
  return push(std::move(n));
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("sum: no inputs");
  node(terms[0], "sum");
  Node n{.op = Op::Sum};
  n.owned = DenseArray::zeros_like(val(terms[0].id));
  for (Var t : terms) {
    const Node& nt = node(t, "sum");
    const DenseArray& v = val(t.id);
    if (v.shape() != n.owned.shape()) shape_error("sum", n.owned.shape(), v.shape());
    n.needs_grad = n.needs_grad || nt.needs_grad;
    n.inputs.push_back(t.id);
    for (std::size_t i = 0; i < v.size(); ++i) n.owned[i] += v[i];
  }
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t label) {
  const Node& nl = node(logits, "softmax_cross_entropy");
  const DenseArray& z = val(logits.id);
  if (z.rank() != 1) shape_error("softmax_cross_entropy", z.shape());
  if (label >= z.size())
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + shape_str(z.shape()));
  Node n{.op = Op::SoftmaxXent, .needs_grad = nl.needs_grad};
  n.inputs = {logits.id};
  n.index_arg = label;
  n.aux = DenseArray(z.shape());
  kernels::softmax(z.data(), n.aux.data());
  n.owned = DenseArray::scalar(kernels::log_sum_exp(z.data()) - z[label]);
  return push(std::move(n));
}

Var Tape::kl_divergence(Var target_logits, Var logits) {
  node(target_logits, "kl_divergence");
  const Node& nl = node(logits, "kl_divergence");
  const DenseArray& t = val(target_logits.id);
  const DenseArray& z = val(logits.id);
  if (t.rank() != 1 || t.shape() != z.shape()) shape_error("kl_divergence", t.shape(), z.shape());
  Node n{.op = Op::KlDiv, .needs_grad = nl.needs_grad};
  n.inputs = {target_logits.id, logits.id};
  n.aux = DenseArray(t.shape());
  kernels::softmax(t.data(), n.aux.data());
  const double lse_t = kernels::log_sum_exp(t.data());
  const double lse_z = kernels::log_sum_exp(z.data());
  double kl = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    kl += n.aux[i] * ((t[i] - lse_t) - (z[i] - lse_z));
  n.owned = DenseArray::scalar(kl);
  return push(std::move(n));
}

Var Tape::squared_difference_sum(Var a, Var b) {
  Node n{.op = Op::SqDiffSum,
         .needs_grad = node(a, "squared_difference_sum").needs_grad ||
                       node(b, "squared_difference_sum").needs_grad};
  const DenseArray& A = val(a.id);
  const DenseArray& B = val(b.id);
  if (A.shape() != B.shape()) shape_error("squared_difference_sum", A.shape(), B.shape());
  n.inputs = {a.id, b.id};
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double d = A[i] - B[i];
    s += d * d;
  }
  n.owned = DenseArray::scalar(s);
  return push(std::move(n));
}

Var Tape::power(Var a, double exponent) {
  Node n{.op = Op::Power, .needs_grad = node(a, "power").needs_grad};
  n.inputs = {a.id};
  n.scalar_arg = exponent;
  n.owned = val(a.id);
  for (auto& x : n.owned.data()) {
    if (x < 0.0 && exponent != std::floor(exponent))
      throw std::domain_error("power: negative base with fractional exponent");
    x = std::pow(x, exponent);
  }
  return push(std::move(n));
}

Gradients Tape::backward(Var output, double seed, const ParamStore* all) const {
  if (nodes_.empty()) throw std::logic_error("backward: tape is empty (forward not run)");
  const Node& out = node(output, "backward");
  if (val(output.id).size() != 1)
    throw std::invalid_argument("backward: output must be a scalar, got " +
                                shape_str(val(output.id).shape()));

  std::vector<DenseArray> grad(output.id + 1);
  auto g_of = [&](std::uint32_t id) -> DenseArray& {
    if (grad[id].empty()) grad[id] = DenseArray::zeros_like(val(id));
    return grad[id];
  };
  if (out.needs_grad) g_of(output.id)[0] = seed;

  Gradients result;
  for (std::int64_t id = output.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || grad[id].empty()) continue;
    const DenseArray& g = grad[id];
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };

    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Param:
        result.insert_or_assign(n.name, g);
        break;
      case Op::MatMul: {
        const DenseArray& A = val(n.inputs[0]);
        const DenseArray& B = val(n.inputs[1]);
        const std::size_t m = A.shape()[0], k = A.shape()[1];
        const std::size_t cols = B.rank() == 1 ? 1 : B.shape()[1];
        if (wants(0)) {
          DenseArray& gA = g_of(n.inputs[0]);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < k; ++i) {
              double acc = 0.0;
              for (std::size_t c = 0; c < cols; ++c) acc += g[r * cols + c] * B[i * cols + c];
              gA[r * k + i] += acc;
            }
        }
        if (wants(1)) {
          DenseArray& gB = g_of(n.inputs[1]);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < k; ++i) {
              const double ar = A[r * k + i];
              for (std::size_t c = 0; c < cols; ++c) gB[i * cols + c] += ar * g[r * cols + c];
            }
        }
        break;
      }
      case Op::Add:
      case Op::Sub: {
        const double sign = n.op == Op::Add ? 1.0 : -1.0;
        if (wants(0)) {
          DenseArray& ga = g_of(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants(1)) {
          DenseArray& gb = g_of(n.inputs[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
        }
        break;
      }
      case Op::Mul: {
        const DenseArray& A = val(n.inputs[0]);
        const DenseArray& B = val(n.inputs[1]);
        if (wants(0)) {
          DenseArray& ga = g_of(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        }
        if (wants(1)) {
          DenseArray& gb = g_of(n.inputs[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::Scale: {
        DenseArray& ga = g_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar_arg;
        break;
      }
      case Op::Unary: {
        DenseArray& ga = g_of(n.inputs[0]);
        const DenseArray& y = n.owned;
        if (n.unary_kind == Unary::Tanh) {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case Op::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t len = val(n.inputs[k]).size();
          if (wants(k)) {
            DenseArray& gk = g_of(n.inputs[k]);
            for (std::size_t i = 0; i < len; ++i) gk[i] += g[offset + i];
          }
          offset += len;
        }
        break;
      }
      case Op::Slice: {
        DenseArray& ga = g_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[n.index_arg + i] += g[i];
        break;
      }
      case Op::Sum: {
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          if (!wants(k)) continue;
          DenseArray& gk = g_of(n.inputs[k]);
          for (std::size_t i = 0; i < g.size(); ++i) gk[i] += g[i];
        }
        break;
      }
      case Op::SoftmaxXent: {
        DenseArray& gz = g_of(n.inputs[0]);
        for (std::size_t i = 0; i < gz.size(); ++i)
          gz[i] += g[0] * (n.aux[i] - (i == n.index_arg ? 1.0 : 0.0));
        break;
      }
      case Op::KlDiv: {
        if (!wants(1)) break;
        const DenseArray& z = val(n.inputs[1]);
        std::vector<double> q(z.size());
        kernels::softmax(z.data(), q);
        DenseArray& gz = g_of(n.inputs[1]);
        for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g[0] * (q[i] - n.aux[i]);
        break;
      }
      case Op::SqDiffSum: {
        const DenseArray& A = val(n.inputs[0]);
        const DenseArray& B = val(n.inputs[1]);
        if (wants(0)) {
          DenseArray& ga = g_of(n.inputs[0]);
          for (std::size_t i = 0; i < A.size(); ++i) ga[i] += 2.0 * g[0] * (A[i] - B[i]);
        }
        if (wants(1)) {
          DenseArray& gb = g_of(n.inputs[1]);
          for (std::size_t i = 0; i < A.size(); ++i) gb[i] -= 2.0 * g[0] * (A[i] - B[i]);
        }
        break;
      }
      case Op::Power: {
        const DenseArray& x = val(n.inputs[0]);
        const double p = n.scalar_arg;
        DenseArray& ga = g_of(n.inputs[0]);
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] == 0.0 && p < 1.0) continue;
          ga[i] += g[i] * p * std::pow(x[i], p - 1.0);
        }
        break;
      }
    }
  }

  if (all != nullptr) {
    for (const auto& [name, entry] : *all)
      if (!result.contains(name)) result.emplace(name, DenseArray::zeros_like(entry.value));
  }
  return result;
}

}  // namespace cnav
