#pragma once

// Dense float64 arrays and a define-by-run reverse-mode differentiation tape.
//
// The primitive set is closed: matmul, add, sub, mul, scale, tanh, sigmoid,
// concat, slice, sum, softmax cross-entropy, KL divergence between softmaxes,
// squared-difference sum and power. There is no broadcasting; each primitive
// checks its shapes and throws std::invalid_argument naming itself on mismatch.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cnav {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, double fill = 0.0);
  DenseArray(Shape shape, std::vector<double> data);

  static DenseArray vector(std::vector<double> values);
  static DenseArray scalar(double v);
  static DenseArray zeros_like(const DenseArray& other);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool all_finite() const;

  friend bool operator==(const DenseArray& a, const DenseArray& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class ParamStore;

// Handle to a value slot on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

using Gradients = std::map<std::string, DenseArray>;

enum class Unary : std::uint8_t { Tanh, Sigmoid };

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaves.
  Var constant(DenseArray value);
  // Trainable leaf bound to a ParamStore entry. The store must outlive the
  // tape and must not be mutated while the tape is in use. Repeated calls with
  // the same name return the same slot so gradients accumulate.
  Var param(const ParamStore& store, const std::string& name);

  // Primitives. `matmul` accepts (m x k)·(k x n) or (m x k)·(k) -> (m).
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var unary(Unary kind, Var a);
  Var tanh(Var a) { return unary(Unary::Tanh, a); }
  Var sigmoid(Var a) { return unary(Unary::Sigmoid, a); }
  Var concat(std::span<const Var> parts);  // rank-1 inputs only
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var slice(Var a, std::size_t offset, std::size_t length);  // rank-1
  Var sum(std::span<const Var> terms);  // elementwise sum of same-shape values
  // -log softmax(logits)[label]; logits rank-1.
  Var softmax_cross_entropy(Var logits, std::size_t label);
  // KL(softmax(target) || softmax(logits)); target is treated as constant.
  Var kl_divergence(Var target_logits, Var logits);
  // sum_i (a_i - b_i)^2 -> scalar.
  Var squared_difference_sum(Var a, Var b);
  // Elementwise x^p. For p < 1 the derivative at x = 0 is taken as 0.
  Var power(Var a, double exponent);

  const DenseArray& value(Var v) const;
  double scalar(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse sweep from `output` (must be a scalar) seeded with `seed`.
  // Returns the gradient for every parameter leaf on the tape; if `all` is
  // given, parameters of that store absent from the tape map to zero arrays.
  Gradients backward(Var output, double seed = 1.0,
                     const ParamStore* all = nullptr) const;

 private:
  enum class Op : std::uint8_t {
    Constant, Param, MatMul, Add, Sub, Mul, Scale, Unary, Concat, Slice, Sum,
    SoftmaxXent, KlDiv, SqDiffSum, Power
  };
  struct Node {
    Op op;
    bool needs_grad = false;
    Unary unary_kind = Unary::Tanh;
    std::vector<std::uint32_t> inputs;
    DenseArray owned;
    const DenseArray* ref = nullptr;  // Param leaves point into the store
    std::string name;                 // Param leaves only
    double scalar_arg = 0.0;          // Scale factor, power exponent
    std::size_t index_arg = 0;        // label, slice offset
    DenseArray aux;                   // softmax probabilities, cached for backward
  };

  const Node& node(Var v, const char* op) const;
  Var push(Node n);
  const DenseArray& val(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::uint32_t> param_slots_;
};

// Shared numerics so that taped and untaped code paths agree bit for bit.
namespace kernels {
void matvec(const DenseArray& a, std::span<const double> x, std::span<double> out);
void softmax(std::span<const double> logits, std::span<double> out);
double log_sum_exp(std::span<const double> logits);
}  // namespace kernels

}  // namespace cnav
