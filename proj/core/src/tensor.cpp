#include "sppr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <new>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace sppr {

namespace detail {

// Every buffer starts on a cache line so Eigen's vectorized loops split
// work the same way regardless of where the heap put the data.
template <typename T>
struct LineAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  LineAllocator() = default;
  template <typename U>
  LineAllocator(const LineAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const LineAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, LineAllocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool tracked = false;
  bool leaf = true;
  bool swept = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Buffer& ensure_grad() {
    if (grad.empty() && !value.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Buffer;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": operand shapes " + shape_string(a) +
                   " and " + shape_string(b) + " do not conform");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a,
                             const std::string& why) {
  throw ShapeError(std::string(op) + ": operand shape " + shape_string(a) +
                   " " + why);
}

void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_string(shape));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Creates op outputs and wires them into the graph when needed.
class OpBuilder {
 public:
  static const NodePtr& node(const Tensor& t) {
    if (!t.node_) throw GraphError("operation on an undefined tensor");
    return t.node_;
  }

  template <typename Backward>
  static Tensor make(const char* op, Shape shape, Buffer value,
                     std::initializer_list<const Tensor*> inputs,
                     Backward&& fn) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    bool any_tracked = false;
    for (const Tensor* in : inputs) any_tracked |= node(*in)->tracked;
    if (any_tracked) {
      out->tracked = true;
      out->leaf = false;
      out->op = op;
      for (const Tensor* in : inputs) out->parents.push_back(node(*in));
      out->backward_fn = std::forward<Backward>(fn);
    }
    return Tensor(std::move(out));
  }

  template <typename Backward>
  static Tensor make_many(const char* op, Shape shape,
                          Buffer value,
                          std::span<const Tensor> inputs, Backward&& fn) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    bool any_tracked = false;
    for (const Tensor& in : inputs) any_tracked |= node(in)->tracked;
    if (any_tracked) {
      out->tracked = true;
      out->leaf = false;
      out->op = op;
      for (const Tensor& in : inputs) out->parents.push_back(node(in));
      out->backward_fn = std::forward<Backward>(fn);
    }
    return Tensor(std::move(out));
  }
};

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(const Shape& shape, bool tracked) {
  return full(shape, 0.0, tracked);
}

Tensor Tensor::full(const Shape& shape, double value, bool tracked) {
  validate_shape(shape);
  return from(shape, std::vector<double>(shape_size(shape), value), tracked);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values,
                    bool tracked) {
  validate_shape(shape);
  if (shape.empty()) throw ShapeError("tensor: rank must be at least 1");
  if (values.size() != shape_size(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value.assign(values.begin(), values.end());
  node->tracked = tracked;
  if (tracked) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool tracked) {
  return from({1}, {value}, tracked);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool tracked) {
  if (rows.size() == 0) throw ShapeError("matrix: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({rows.size(), cols}, std::move(values), tracked);
}

const Shape& Tensor::shape() const { return OpBuilder::node(*this)->shape; }
std::size_t Tensor::size() const { return OpBuilder::node(*this)->value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(s));
  }
  return s[axis];
}

std::span<const double> Tensor::values() const {
  return OpBuilder::node(*this)->value;
}

std::span<double> Tensor::mutable_values() {
  auto& n = OpBuilder::node(*this);
  if (!n->leaf) throw GraphError("mutable_values: tensor produced by '" +
                                 std::string(n->op) + "' is not a leaf");
  return n->value;
}

double Tensor::item() const {
  const auto& n = OpBuilder::node(*this);
  if (n->value.size() != 1) {
    throw ShapeError("item: tensor of shape " + shape_string(n->shape) +
                     " is not a scalar");
  }
  return n->value[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  const auto& n = OpBuilder::node(*this);
  if (n->shape.size() != 2 || i >= n->shape[0] || j >= n->shape[1]) {
    throw ShapeError("at: index (" + std::to_string(i) + "," +
                     std::to_string(j) + ") invalid for " +
                     shape_string(n->shape));
  }
  return n->value[i * n->shape[1] + j];
}

bool Tensor::tracked() const { return OpBuilder::node(*this)->tracked; }

void Tensor::set_tracked(bool tracked) {
  auto& n = OpBuilder::node(*this);
  if (!n->leaf) throw GraphError("set_tracked: only leaves can change tracking");
  n->tracked = tracked;
  if (tracked) {
    n->ensure_grad();
  } else {
    n->grad.clear();
  }
}

bool Tensor::is_leaf() const { return OpBuilder::node(*this)->leaf; }

bool Tensor::has_grad() const { return !OpBuilder::node(*this)->grad.empty(); }

std::span<const double> Tensor::grad() const {
  const auto& n = OpBuilder::node(*this);
  if (n->grad.empty()) throw GraphError("grad: tensor has no gradient");
  return n->grad;
}

void Tensor::zero_grad() {
  auto& n = OpBuilder::node(*this);
  std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

Tensor Tensor::clone(bool tracked) const {
  const auto& n = OpBuilder::node(*this);
  return from(n->shape, std::vector<double>(n->value.begin(), n->value.end()), tracked);
}

std::string Tensor::op_name() const { return OpBuilder::node(*this)->op; }

// ---------------------------------------------------------------------------
// Elementwise machinery

namespace {

enum class Broadcast { kSame, kScalarLeft, kScalarRight, kRowRight };

struct BinaryPlan {
  Broadcast kind;
  Shape out_shape;
  std::size_t row = 1;
};

BinaryPlan plan_binary(const char* op, const Shape& a, const Shape& b) {
  const std::size_t na = shape_size(a), nb = shape_size(b);
  if (a == b) return {Broadcast::kSame, a};
  if (nb == 1) return {Broadcast::kScalarRight, a};
  if (na == 1) return {Broadcast::kScalarLeft, b};
  const bool row_vector =
      (b.size() == 1) || (b.size() == 2 && b[0] == 1);
  if (row_vector && !a.empty() && a.back() == nb) {
    return {Broadcast::kRowRight, a, nb};
  }
  shape_fail(op, a, b);
}

inline std::size_t a_index(const BinaryPlan& p, std::size_t i) {
  return p.kind == Broadcast::kScalarLeft ? 0 : i;
}
inline std::size_t b_index(const BinaryPlan& p, std::size_t i) {
  switch (p.kind) {
    case Broadcast::kSame: return i;
    case Broadcast::kScalarLeft: return i;
    case Broadcast::kScalarRight: return 0;
    case Broadcast::kRowRight: return i % p.row;
  }
  return i;
}

// f(x, y) forward; dfx/dfy map (x, y, g) to the partial contributions.
template <typename F, typename DX, typename DY>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DX dfx,
              DY dfy) {
  const auto& na = OpBuilder::node(a);
  const auto& nb = OpBuilder::node(b);
  BinaryPlan plan = plan_binary(op, na->shape, nb->shape);
  const std::size_t n = shape_size(plan.out_shape);
  Buffer out(n);
  const double* av = na->value.data();
  const double* bv = nb->value.data();
  if (plan.kind == Broadcast::kSame) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else if (plan.kind == Broadcast::kRowRight) {
    for (std::size_t base = 0; base < n; base += plan.row) {
      for (std::size_t j = 0; j < plan.row; ++j) out[base + j] = f(av[base + j], bv[j]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = f(av[a_index(plan, i)], bv[b_index(plan, i)]);
    }
  }
  Shape shape = plan.out_shape;
  return OpBuilder::make(
      op, std::move(shape), std::move(out), {&a, &b},
      [plan, dfx, dfy](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const std::size_t n = self.value.size();
        const double* g = self.grad.data();
        if (pa.tracked) {
          auto& ga = pa.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = a_index(plan, i), ib = b_index(plan, i);
            ga[ia] += dfx(pa.value[ia], pb.value[ib], g[i]);
          }
        }
        if (pb.tracked) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = a_index(plan, i), ib = b_index(plan, i);
            gb[ib] += dfy(pa.value[ia], pb.value[ib], g[i]);
          }
        }
      });
}

// f(x) forward; df(x, y, g) is the input gradient given output y.
template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  const auto& na = OpBuilder::node(a);
  const std::size_t n = na->value.size();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(na->value[i]);
  return OpBuilder::make(op, na->shape, std::move(out), {&a},
                         [df](Node& self) {
                           Node& p = *self.parents[0];
                           if (!p.tracked) return;
                           auto& gp = p.ensure_grad();
                           const std::size_t n = self.value.size();
                           for (std::size_t i = 0; i < n; ++i) {
                             gp[i] += df(p.value[i], self.value[i], self.grad[i]);
                           }
                         });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = OpBuilder::node(a);
  const auto& nb = OpBuilder::node(b);
  if (na->shape.size() != 2 || nb->shape.size() != 2 ||
      na->shape[1] != nb->shape[0]) {
    shape_fail("matmul", na->shape, nb->shape);
  }
  const auto m = static_cast<Eigen::Index>(na->shape[0]);
  const auto k = static_cast<Eigen::Index>(na->shape[1]);
  const auto n = static_cast<Eigen::Index>(nb->shape[1]);
  Buffer out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() =
      ConstMap(na->value.data(), m, k) * ConstMap(nb->value.data(), k, n);
  return OpBuilder::make(
      "matmul", {na->shape[0], nb->shape[1]}, std::move(out), {&a, &b},
      [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        ConstMap g(self.grad.data(), m, n);
        if (pa.tracked) {
          MutMap(pa.ensure_grad().data(), m, k).noalias() +=
              g * ConstMap(pb.value.data(), k, n).transpose();
        }
        if (pb.tracked) {
          MutMap(pb.ensure_grad().data(), k, n).noalias() +=
              ConstMap(pa.value.data(), m, k).transpose() * g;
        }
      });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& nx = OpBuilder::node(x);
  const auto& nw = OpBuilder::node(w);
  const auto& nb = OpBuilder::node(b);
  if (nx->shape.size() != 2 || nw->shape.size() != 2 || nx->shape[1] != nw->shape[0]) {
    shape_fail("affine", nx->shape, nw->shape);
  }
  const auto m = static_cast<Eigen::Index>(nx->shape[0]);
  const auto k = static_cast<Eigen::Index>(nx->shape[1]);
  const auto n = static_cast<Eigen::Index>(nw->shape[1]);
  if (nb->value.size() != static_cast<std::size_t>(n) ||
      (nb->shape.size() == 2 && nb->shape[0] != 1) || nb->shape.size() > 2) {
    shape_fail("affine", nb->shape, "is not a [1 x " + std::to_string(n) + "] bias");
  }
  Buffer out(static_cast<std::size_t>(m * n));
  MutMap y(out.data(), m, n);
  y.noalias() = ConstMap(nx->value.data(), m, k) * ConstMap(nw->value.data(), k, n);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(nb->value.data(), n);
  return OpBuilder::make(
      "affine", {nx->shape[0], nw->shape[1]}, std::move(out), {&x, &w, &b},
      [m, k, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        ConstMap g(self.grad.data(), m, n);
        if (px.tracked) {
          MutMap(px.ensure_grad().data(), m, k).noalias() +=
              g * ConstMap(pw.value.data(), k, n).transpose();
        }
        if (pw.tracked) {
          MutMap(pw.ensure_grad().data(), k, n).noalias() +=
              ConstMap(px.value.data(), m, k).transpose() * g;
        }
        if (pb.tracked) MutMap(pb.ensure_grad().data(), 1, n) += g.colwise().sum();
      });
}

namespace {

using AlignedChunk = Eigen::Map<Eigen::ArrayXd, Eigen::Aligned64>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

// Eigen peels a data-dependent number of leading elements onto its scalar exp
// when the destination is unaligned, which makes results depend on the heap
// address. Writing through an aligned scratch chunk keeps them reproducible.
template <typename F>
void chunked_into(const double* in, double* out, Eigen::Index n, F f) {
  constexpr Eigen::Index kChunk = 512;
  alignas(64) double buf[kChunk];
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    AlignedChunk(buf, len) = f(ConstArrayMap(in + start, len));
    std::memcpy(out + start, buf, static_cast<std::size_t>(len) * sizeof(double));
  }
}

void sigmoid_into(const double* in, double* out, Eigen::Index n) {
  chunked_into(in, out, n, [](const auto& x) { return (1.0 + (-x).exp()).inverse(); });
}

void tanh_into(const double* in, double* out, Eigen::Index n) {
  chunked_into(in, out, n, [](const auto& x) { return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0); });
}

}  // namespace

Tensor lstm_gates(const Tensor& pre, const Tensor& c_prev) {
  const auto& np = OpBuilder::node(pre);
  const auto& nc = OpBuilder::node(c_prev);
  if (np->shape.size() != 2 || np->shape[1] % 4 != 0 || nc->shape.size() != 2 ||
      nc->shape[0] != np->shape[0] || 4 * nc->shape[1] != np->shape[1]) {
    shape_fail("lstm_gates", np->shape, nc->shape);
  }
  const std::size_t rows = np->shape[0], hidden = nc->shape[1];
  Buffer acts(rows * 4 * hidden), tc(rows * hidden), out(rows * 2 * hidden);
  // One contiguous sigmoid pass; the candidate block uses tanh(x) = 2 sigmoid(2x) - 1.
  std::copy(np->value.begin(), np->value.end(), acts.begin());
  for (std::size_t r = 0; r < rows; ++r) {
    double* g = acts.data() + r * 4 * hidden + 2 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) g[j] *= 2.0;
  }
  sigmoid_into(acts.data(), acts.data(), static_cast<Eigen::Index>(acts.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    double* a = acts.data() + r * 4 * hidden;
    const double* cp = nc->value.data() + r * hidden;
    double* o = out.data() + r * 2 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      a[2 * hidden + j] = 2.0 * a[2 * hidden + j] - 1.0;
      const double cell = a[hidden + j] * cp[j] + a[j] * a[2 * hidden + j];
      o[hidden + j] = cell;
      tc[r * hidden + j] = cell;
    }
  }
  tanh_into(tc.data(), tc.data(), static_cast<Eigen::Index>(tc.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* a = acts.data() + r * 4 * hidden;
    double* o = out.data() + r * 2 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) o[j] = a[3 * hidden + j] * tc[r * hidden + j];
  }
  return OpBuilder::make(
      "lstm_gates", {rows, 2 * hidden}, std::move(out), {&pre, &c_prev},
      [rows, hidden, acts = std::move(acts), tc = std::move(tc)](Node& self) {
        Node& pp = *self.parents[0];
        Node& pc = *self.parents[1];
        double* gp = pp.tracked ? pp.ensure_grad().data() : nullptr;
        double* gc = pc.tracked ? pc.ensure_grad().data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* a = acts.data() + r * 4 * hidden;
          const double* g = self.grad.data() + r * 2 * hidden;
          const double* cp = pc.value.data() + r * hidden;
          for (std::size_t j = 0; j < hidden; ++j) {
            const double i = a[j], f = a[hidden + j], cand = a[2 * hidden + j],
                         o = a[3 * hidden + j], t = tc[r * hidden + j];
            const double gh = g[j];
            const double dc = g[hidden + j] + gh * o * (1.0 - t * t);
            if (gp) {
              double* d = gp + r * 4 * hidden;
              d[j] += dc * cand * i * (1.0 - i);
              d[hidden + j] += dc * cp[j] * f * (1.0 - f);
              d[2 * hidden + j] += dc * i * (1.0 - cand * cand);
              d[3 * hidden + j] += gh * t * o * (1.0 - o);
            }
            if (gc) gc[r * hidden + j] += dc * f;
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double, double g) { return factor * g; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double, double, double g) { return g; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); },
      [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y, double g) { return g * (1.0 - y * y); });
}

Tensor log(const Tensor& a) {
  const auto& na = OpBuilder::node(a);
  for (double x : na->value) {
    if (!(x > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x) +
                        " (clamp probabilities before taking logs)");
    }
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double, double g) { return g / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double, double g) { return 2.0 * x * g; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double, double g) {
        return (x >= lo && x <= hi) ? g : 0.0;
      });
}

Tensor softmax(const Tensor& a) {
  const auto& na = OpBuilder::node(a);
  const std::size_t cols = na->shape.back();
  const std::size_t rows = na->value.size() / cols;
  Buffer out(na->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = na->value.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return OpBuilder::make("softmax", na->shape, std::move(out), {&a},
                         [rows, cols](Node& self) {
                           Node& p = *self.parents[0];
                           if (!p.tracked) return;
                           auto& gp = p.ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* y = self.value.data() + r * cols;
                             const double* g = self.grad.data() + r * cols;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
                             for (std::size_t c = 0; c < cols; ++c) {
                               gp[r * cols + c] += y[c] * (g[c] - dot);
                             }
                           }
                         });
}

Tensor sum(const Tensor& a) {
  const auto& na = OpBuilder::node(a);
  const double total = std::accumulate(na->value.begin(), na->value.end(), 0.0);
  return OpBuilder::make("sum", {1}, {total}, {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.tracked) return;
    auto& gp = p.ensure_grad();
    for (auto& v : gp) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto& na = OpBuilder::node(a);
  const double n = static_cast<double>(na->value.size());
  const double total = std::accumulate(na->value.begin(), na->value.end(), 0.0);
  return OpBuilder::make("mean", {1}, {total / n}, {&a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.tracked) return;
    auto& gp = p.ensure_grad();
    for (auto& v : gp) v += self.grad[0] / n;
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = OpBuilder::node(parts[0])->shape;
  if (first.size() != 2) shape_fail("concat", first, "is not rank 2");
  const std::size_t rows = first[0];
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  std::size_t cols = 0;
  for (const Tensor& t : parts) {
    const Shape& s = OpBuilder::node(t)->shape;
    if (s.size() != 2 || s[0] != rows) shape_fail("concat", first, s);
    widths.push_back(s[1]);
    cols += s[1];
  }
  Buffer out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = OpBuilder::node(parts[p])->value;
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * w, w, out.data() + r * cols + offset);
    }
    offset += w;
  }
  return OpBuilder::make_many(
      "concat", {rows, cols}, std::move(out), parts,
      [rows, cols, widths = std::move(widths)](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          Node& parent = *self.parents[p];
          const std::size_t w = widths[p];
          if (parent.tracked) {
            auto& gp = parent.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
              const double* g = self.grad.data() + r * cols + offset;
              double* dst = gp.data() + r * w;
              for (std::size_t c = 0; c < w; ++c) dst[c] += g[c];
            }
          }
          offset += w;
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto& na = OpBuilder::node(a);
  if (na->shape.size() != 2) shape_fail("slice", na->shape, "is not rank 2");
  const std::size_t rows = na->shape[0], cols = na->shape[1];
  if (begin >= end || end > cols) {
    shape_fail("slice", na->shape,
               "cannot provide columns [" + std::to_string(begin) + "," +
                   std::to_string(end) + ")");
  }
  const std::size_t w = end - begin;
  Buffer out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(na->value.data() + r * cols + begin, w, out.data() + r * w);
  }
  return OpBuilder::make("slice", {rows, w}, std::move(out), {&a},
                         [rows, cols, begin, w](Node& self) {
                           Node& p = *self.parents[0];
                           if (!p.tracked) return;
                           auto& gp = p.ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < w; ++c) {
                               gp[r * cols + begin + c] += self.grad[r * w + c];
                             }
                           }
                         });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  const auto& na = OpBuilder::node(a);
  validate_shape(shape);
  if (shape.empty() || shape_size(shape) != na->value.size()) {
    shape_fail("reshape", na->shape, shape);
  }
  return OpBuilder::make("reshape", shape, na->value, {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.tracked) return;
    auto& gp = p.ensure_grad();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reverse sweep

void backward(const Tensor& loss) {
  const NodePtr& root = OpBuilder::node(loss);
  if (root->value.size() != 1) {
    throw GraphError("backward: loss of shape " + shape_string(root->shape) +
                     " is not a scalar");
  }
  if (!root->tracked) return;
  if (root->swept) {
    throw GraphError("backward: graph already swept; re-run the forward pass");
  }

  // Iterative post-order DFS over tracked nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->tracked && !parent->leaf && seen.insert(parent).second) {
        if (parent->swept) {
          throw GraphError("backward: graph already swept; re-run the forward pass");
        }
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  for (Node* node : order) {
    if (node->leaf) continue;
    node->swept = true;
    node->backward_fn = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

}  // namespace sppr
