#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sppr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when operand shapes do not satisfy an op's conformance rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for mathematically undefined inputs (log of a non-positive value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for misuse of the differentiation graph.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct Node;
}

/// Dense row-major array of doubles. A Tensor is a cheap handle: copies share
/// storage. Tracked tensors take part in reverse-mode differentiation; every
/// op whose inputs include a tracked tensor records itself on the graph.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(const Shape& shape, bool tracked = false);
  static Tensor full(const Shape& shape, double value, bool tracked = false);
  static Tensor from(const Shape& shape, std::vector<double> values,
                     bool tracked = false);
  static Tensor scalar(double value, bool tracked = false);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool tracked = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  /// Writable view. Only leaves may be written; interior nodes are owned by the graph.
  std::span<double> mutable_values();

  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool tracked() const;
  /// Toggle participation in differentiation. Leaves only.
  void set_tracked(bool tracked);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of values as a fresh leaf with the given tracking flag.
  Tensor clone(bool tracked) const;
  /// Untracked leaf sharing no graph history with this tensor.
  Tensor detach() const { return clone(false); }

  /// Name of the op that produced this tensor ("leaf" for leaves).
  std::string op_name() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Node;
  friend class OpBuilder;
  friend void backward(const Tensor& loss);
};

// Differentiable ops. Elementwise binary ops accept identical shapes, a
// size-1 operand (scalar broadcast), or a [1 x n] / [n] right operand that is
// broadcast across the rows of a [.. x n] left operand.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Clamp into [lo, hi]; gradient is zero where the bound is active.
Tensor clamp(const Tensor& a, double lo, double hi);
/// Softmax over the last axis.
Tensor softmax(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Concatenate rank-2 tensors with equal row counts along the column axis.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
/// Columns [begin, end) of a rank-2 tensor.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
/// Same values under a new shape of equal size.
Tensor reshape(const Tensor& a, const Shape& shape);

/// x [B x K] times w [K x N] plus row bias b [1 x N], as one graph node.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
/// Fused LSTM gate nonlinearities. `pre` is [B x 4H] with column blocks
/// [i | f | g | o], `c_prev` is [B x H]. Returns [B x 2H] = [h | c] with
/// c = sigmoid(f) c_prev + sigmoid(i) tanh(g) and h = sigmoid(o) tanh(c).
Tensor lstm_gates(const Tensor& pre, const Tensor& c_prev);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Reverse sweep from a tracked scalar. Leaf gradients accumulate across
/// calls; zero them between optimizer steps. A graph can be swept once.
void backward(const Tensor& loss);

}  // namespace sppr
