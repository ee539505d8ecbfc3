#include "ovgt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ovgt {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;

const NodePtr& node_of(const Tensor& t) {
  if (!t.defined()) throw std::logic_error("operation on undefined tensor");
  return TensorAccess::node(t);
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Builds the result node. When no input tracks gradients (or grad mode is off)
// the graph edge is dropped so the result is a plain constant.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) track = track || in->requires_grad;
  }
  if (track) {
    out->requires_grad = true;
    out->inputs = std::move(inputs);
    out->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(out));
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Offset into `in` for every element of `out` under broadcasting.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t total = numel(out);
  std::vector<std::size_t> offsets(total);
  const std::size_t rank = out.size();
  const std::size_t pad = rank - in.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> eff(rank, 0);
  for (std::size_t i = 0; i < in.size(); ++i) eff[pad + i] = in[i] == 1 ? 0 : in_strides[i];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    offsets[flat] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      off += eff[d];
      if (counter[d] < out[d]) break;
      off -= eff[d] * counter[d];
      counter[d] = 0;
    }
  }
  return offsets;
}

enum class IndexMode { kSame, kScalar, kSuffix, kGeneral };

struct OperandIndex {
  IndexMode mode;
  std::size_t n;
  std::vector<std::size_t> offsets;

  std::size_t operator()(std::size_t i) const {
    switch (mode) {
      case IndexMode::kSame:
        return i;
      case IndexMode::kScalar:
        return 0;
      case IndexMode::kSuffix:
        return i % n;
      default:
        return offsets[i];
    }
  }
};

OperandIndex make_index(const Shape& out, const Shape& in) {
  const std::size_t n = numel(in);
  if (in == out) return {IndexMode::kSame, n, {}};
  if (n == 1) return {IndexMode::kScalar, n, {}};
  if (in.size() <= out.size() && std::equal(in.begin(), in.end(), out.end() - in.size())) {
    return {IndexMode::kSuffix, n, {}};
  }
  return {IndexMode::kGeneral, n, broadcast_offsets(out, in)};
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_op(const Tensor& ta, const Tensor& tb, Fwd fwd, GradA grad_a, GradB grad_b) {
  const NodePtr& a = node_of(ta);
  const NodePtr& b = node_of(tb);
  Shape shape = broadcast_shapes(a->shape, b->shape);
  auto ia = std::make_shared<OperandIndex>(make_index(shape, a->shape));
  auto ib = std::make_shared<OperandIndex>(make_index(shape, b->shape));
  const std::size_t total = numel(shape);
  std::vector<double> out(total);
  const double* av = a->value.data();
  const double* bv = b->value.data();
  for (std::size_t i = 0; i < total; ++i) out[i] = fwd(av[(*ia)(i)], bv[(*ib)(i)]);
  return make_result(std::move(shape), std::move(out), {a, b},
                     [a, b, ia, ib, grad_a, grad_b](Node& self) {
                       const std::size_t total = self.value.size();
                       const double* av = a->value.data();
                       const double* bv = b->value.data();
                       const double* g = self.grad.data();
                       if (a->requires_grad) {
                         auto& ga = a->grad_buffer();
                         for (std::size_t i = 0; i < total; ++i) {
                           const std::size_t ja = (*ia)(i);
                           ga[ja] += grad_a(av[ja], bv[(*ib)(i)], self.value[i]) * g[i];
                         }
                       }
                       if (b->requires_grad) {
                         auto& gb = b->grad_buffer();
                         for (std::size_t i = 0; i < total; ++i) {
                           const std::size_t jb = (*ib)(i);
                           gb[jb] += grad_b(av[(*ia)(i)], bv[jb], self.value[i]) * g[i];
                         }
                       }
                     });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& tx, Fwd fwd, Deriv deriv) {
  const NodePtr& x = node_of(tx);
  std::vector<double> out(x->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x->value[i]);
  return make_result(x->shape, std::move(out), {x}, [x, deriv](Node& self) {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += deriv(x->value[i], self.value[i]) * self.grad[i];
  });
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ga[m,k] += g[m,n] * b[k,n]^T
void gemm_acc_bt(const double* g, const double* b, double* ga, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* garow = ga + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      garow[p] += acc;
    }
  }
}

// gb[k,n] += a[m,k]^T * g[m,n]
void gemm_acc_at(const double* a, const double* g, double* gb, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* gbrow = gb + p * n;
      for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

Tensor reduce_axis(const Tensor& tx, int axis, bool keepdim, double scale) {
  const NodePtr& x = node_of(tx);
  const std::size_t ax = normalize_axis(axis, x->shape.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x->shape[i];
  for (std::size_t i = ax + 1; i < x->shape.size(); ++i) inner *= x->shape[i];
  const std::size_t len = x->shape[ax];
  Shape shape = x->shape;
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = x->value.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (scale != 1.0) {
    for (auto& v : out) v *= scale;
  }
  return make_result(std::move(shape), std::move(out), {x}, [x, outer, inner, len, scale](Node& self) {
    auto& gx = x->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * inner;
      for (std::size_t l = 0; l < len; ++l) {
        double* dst = gx.data() + (o * len + l) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i] * scale;
      }
    }
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ovgt::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ovgt::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

const Shape& Tensor::shape() const { return node_of(*this)->shape; }

std::size_t Tensor::size(int axis) const { return shape()[normalize_axis(axis, rank())]; }

std::size_t Tensor::numel() const { return node_of(*this)->value.size(); }

std::span<const double> Tensor::values() const { return node_of(*this)->value; }

std::span<double> Tensor::mutable_values() { return node_of(*this)->value; }

std::span<const double> Tensor::grad() const { return node_of(*this)->grad; }

std::span<double> Tensor::mutable_grad() { return node_of(*this)->grad_buffer(); }

bool Tensor::has_grad() const { return !node_of(*this)->grad.empty(); }

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_of(*this)->requires_grad = flag; }

void Tensor::zero_grad() {
  auto& g = node_of(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::item() const {
  const auto& n = node_of(*this);
  if (n->value.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(n->shape));
  return n->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& n = node_of(*this);
  if (index.size() != n->shape.size()) throw ShapeError("index rank mismatch for " + to_string(n->shape));
  std::size_t off = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= n->shape[d]) throw ShapeError("index out of range for " + to_string(n->shape));
    off = off * n->shape[d] + i;
    ++d;
  }
  return n->value[off];
}

void Tensor::backward() const {
  const NodePtr& root = node_of(*this);
  if (root->value.size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + to_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are per-pass; leaves accumulate across passes.
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  const auto& n = node_of(*this);
  return Tensor(n->shape, n->value);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor exp(const Tensor& x) {
  return unary_op(x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& x) {
  return unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

Tensor softplus(const Tensor& x) { return log(exp(x) + 1.0); }

Tensor sqrt(const Tensor& x) { return exp(log(x) * 0.5); }

// ---------------------------------------------------------------------------
// Contractions and normalization

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const NodePtr& a = node_of(ta);
  const NodePtr& b = node_of(tb);
  if (a->shape.size() < 2 || b->shape.size() < 2) {
    throw ShapeError("matmul needs rank >= 2, got " + to_string(a->shape) + " x " + to_string(b->shape));
  }
  const std::size_t m = a->shape[a->shape.size() - 2];
  const std::size_t k = a->shape.back();
  const std::size_t kb = b->shape[b->shape.size() - 2];
  const std::size_t n = b->shape.back();
  if (k != kb) throw ShapeError("matmul inner dimension mismatch: " + to_string(a->shape) + " x " + to_string(b->shape));

  const Shape batch_a(a->shape.begin(), a->shape.end() - 2);
  const Shape batch_b(b->shape.begin(), b->shape.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(batch_a, batch_b);
  } catch (const ShapeError&) {
    throw ShapeError("matmul batch dimensions not broadcastable: " + to_string(a->shape) + " x " + to_string(b->shape));
  }
  const std::size_t nbatch = numel(batch);
  auto off_a = std::make_shared<std::vector<std::size_t>>(nbatch);
  auto off_b = std::make_shared<std::vector<std::size_t>>(nbatch);
  {
    const auto ia = make_index(batch, batch_a);
    const auto ib = make_index(batch, batch_b);
    for (std::size_t i = 0; i < nbatch; ++i) {
      (*off_a)[i] = ia(i) * m * k;
      (*off_b)[i] = ib(i) * k * n;
    }
  }
  Shape shape = batch;
  shape.push_back(m);
  shape.push_back(n);
  std::vector<double> out(nbatch * m * n, 0.0);
  for (std::size_t bi = 0; bi < nbatch; ++bi) {
    gemm_acc(a->value.data() + (*off_a)[bi], b->value.data() + (*off_b)[bi], out.data() + bi * m * n, m, k, n);
  }
  return make_result(std::move(shape), std::move(out), {a, b}, [a, b, off_a, off_b, nbatch, m, k, n](Node& self) {
    for (std::size_t bi = 0; bi < nbatch; ++bi) {
      const double* g = self.grad.data() + bi * m * n;
      if (a->requires_grad) {
        gemm_acc_bt(g, b->value.data() + (*off_b)[bi], a->grad_buffer().data() + (*off_a)[bi], m, k, n);
      }
      if (b->requires_grad) {
        gemm_acc_at(a->value.data() + (*off_a)[bi], g, b->grad_buffer().data() + (*off_b)[bi], m, k, n);
      }
    }
  });
}

Tensor softmax(const Tensor& tx, int axis) {
  const NodePtr& x = node_of(tx);
  const std::size_t ax = normalize_axis(axis, x->shape.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x->shape[i];
  for (std::size_t i = ax + 1; i < x->shape.size(); ++i) inner *= x->shape[i];
  const std::size_t len = x->shape[ax];
  std::vector<double> out(x->value.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x->value[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x->value[base + l * inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(x->value[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  return make_result(x->shape, std::move(out), {x}, [x, outer, inner, len](Node& self) {
    auto& gx = x->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) dot += self.grad[base + l * inner] * self.value[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = base + l * inner;
          gx[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor layernorm(const Tensor& tx, const Tensor& tgain, const Tensor& tbias, double eps) {
  const NodePtr& x = node_of(tx);
  const NodePtr& gain = node_of(tgain);
  const NodePtr& bias = node_of(tbias);
  if (x->shape.empty()) throw ShapeError("layernorm on scalar");
  const std::size_t d = x->shape.back();
  if (gain->value.size() != d || bias->value.size() != d) {
    throw ShapeError("layernorm gain/bias length must equal last dim of " + to_string(x->shape));
  }
  const std::size_t rows = x->value.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(x->value.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (xr[i] - mu) * rs;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * gain->value[i] + bias->value[i];
    }
  }
  return make_result(x->shape, std::move(out), {x, gain, bias}, [x, gain, bias, xhat, rstd, rows, d](Node& self) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * d;
      const double* h = xhat->data() + r * d;
      if (gain->requires_grad) {
        auto& gg = gain->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) gg[i] += g[i] * h[i];
      }
      if (bias->requires_grad) {
        auto& gb = bias->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) gb[i] += g[i];
      }
      if (x->requires_grad) {
        double mean_dy = 0.0;
        double mean_dyh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double dy = g[i] * gain->value[i];
          mean_dy += dy;
          mean_dyh += dy * h[i];
        }
        mean_dy *= inv_d;
        mean_dyh *= inv_d;
        double* gx = x->grad_buffer().data() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
          const double dy = g[i] * gain->value[i];
          gx[i] += (*rstd)[r] * (dy - mean_dy - h[i] * mean_dyh);
        }
      }
    }
  });
}

Tensor patchify_conv(const Tensor& tx, const Tensor& tweight, const Tensor& tbias, std::size_t patch) {
  const NodePtr& x = node_of(tx);
  const NodePtr& w = node_of(tweight);
  const NodePtr& bias = node_of(tbias);
  const bool batched = x->shape.size() == 4;
  if (!batched && x->shape.size() != 3) throw ShapeError("patchify_conv expects [C,H,W] or [N,C,H,W], got " + to_string(x->shape));
  if (patch == 0) throw ShapeError("patch size must be positive");
  const std::size_t nimg = batched ? x->shape[0] : 1;
  const std::size_t c = x->shape[x->shape.size() - 3];
  const std::size_t h = x->shape[x->shape.size() - 2];
  const std::size_t wd = x->shape.back();
  if (h % patch != 0 || wd % patch != 0) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(wd) + " not divisible by patch " +
                     std::to_string(patch));
  }
  const std::size_t kdim = c * patch * patch;
  if (w->shape.size() != 2 || w->shape[0] != kdim) {
    throw ShapeError("patchify_conv weight must be [" + std::to_string(kdim) + ", dim], got " + to_string(w->shape));
  }
  const std::size_t dim = w->shape[1];
  if (bias->value.size() != dim) throw ShapeError("patchify_conv bias must have length " + std::to_string(dim));
  const std::size_t ph = h / patch;
  const std::size_t pw = wd / patch;
  const std::size_t np = ph * pw;

  // Gather index of every (image, patch, k) entry into x.
  auto gather = std::make_shared<std::vector<std::size_t>>(nimg * np * kdim);
  for (std::size_t n = 0; n < nimg; ++n) {
    for (std::size_t py = 0; py < ph; ++py) {
      for (std::size_t px = 0; px < pw; ++px) {
        std::size_t* dst = gather->data() + ((n * np) + py * pw + px) * kdim;
        std::size_t kk = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t dy = 0; dy < patch; ++dy) {
            for (std::size_t dx = 0; dx < patch; ++dx) {
              dst[kk++] = ((n * c + ch) * h + py * patch + dy) * wd + px * patch + dx;
            }
          }
        }
      }
    }
  }
  const std::size_t rows = nimg * np;
  std::vector<double> cols(rows * kdim);
  for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = x->value[(*gather)[i]];
  std::vector<double> out(rows * dim, 0.0);
  gemm_acc(cols.data(), w->value.data(), out.data(), rows, kdim, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] += bias->value[j];
  }
  Shape shape = batched ? Shape{nimg, np, dim} : Shape{np, dim};
  return make_result(std::move(shape), std::move(out), {x, w, bias}, [x, w, bias, gather, rows, kdim, dim](Node& self) {
    if (bias->requires_grad) {
      auto& gb = bias->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < dim; ++j) gb[j] += self.grad[r * dim + j];
      }
    }
    if (w->requires_grad) {
      std::vector<double> cols(rows * kdim);
      for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = x->value[(*gather)[i]];
      gemm_acc_at(cols.data(), self.grad.data(), w->grad_buffer().data(), rows, kdim, dim);
    }
    if (x->requires_grad) {
      std::vector<double> gcols(rows * kdim, 0.0);
      gemm_acc_bt(self.grad.data(), w->value.data(), gcols.data(), rows, kdim, dim);
      auto& gx = x->grad_buffer();
      for (std::size_t i = 0; i < gcols.size(); ++i) gx[(*gather)[i]] += gcols[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(node_of(p));
  const Shape& first = nodes.front()->shape;
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& n : nodes) {
    if (n->shape.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != ax && n->shape[i] != first[i]) {
        throw ShapeError("concat shape mismatch: " + to_string(first) + " vs " + to_string(n->shape));
      }
    }
    shape[ax] += n->shape[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = shape[ax] * inner;
  std::vector<double> out(outer * out_row);
  std::size_t col = 0;
  for (const auto& n : nodes) {
    const std::size_t chunk = n->shape[ax] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(n->value.data() + o * chunk, chunk, out.data() + o * out_row + col);
    }
    col += chunk;
  }
  return make_result(std::move(shape), std::move(out), nodes, [nodes, outer, inner, out_row, ax](Node& self) {
    std::size_t col = 0;
    for (const auto& n : nodes) {
      const std::size_t chunk = n->shape[ax] * inner;
      if (n->requires_grad) {
        auto& g = n->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * out_row + col;
          double* dst = g.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      col += chunk;
    }
  });
}

Tensor slice(const Tensor& tx, int axis, std::size_t begin, std::size_t end) {
  const NodePtr& x = node_of(tx);
  const std::size_t ax = normalize_axis(axis, x->shape.size());
  if (begin > end || end > x->shape[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for axis of size " +
                     std::to_string(x->shape[ax]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x->shape[i];
  for (std::size_t i = ax + 1; i < x->shape.size(); ++i) inner *= x->shape[i];
  const std::size_t in_row = x->shape[ax] * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Shape shape = x->shape;
  shape[ax] = end - begin;
  std::vector<double> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x->value.data() + o * in_row + start, chunk, out.data() + o * chunk);
  return make_result(std::move(shape), std::move(out), {x}, [x, outer, in_row, chunk, start](Node& self) {
    auto& g = x->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + o * chunk;
      double* dst = g.data() + o * in_row + start;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Tensor reshape(const Tensor& tx, Shape shape) {
  const NodePtr& x = node_of(tx);
  if (numel(shape) != x->value.size()) {
    throw ShapeError("cannot reshape " + to_string(x->shape) + " to " + to_string(shape));
  }
  return make_result(std::move(shape), x->value, {x}, [x](Node& self) {
    auto& g = x->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& tx, const std::vector<std::size_t>& perm) {
  const NodePtr& x = node_of(tx);
  const std::size_t rank = x->shape.size();
  if (perm.size() != rank) throw ShapeError("transpose permutation rank mismatch for " + to_string(x->shape));
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("invalid axis permutation");
    seen[p] = true;
  }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = x->shape[perm[i]];
  const auto in_strides = strides_of(x->shape);
  std::vector<std::size_t> eff(rank);
  for (std::size_t i = 0; i < rank; ++i) eff[i] = in_strides[perm[i]];
  const std::size_t total = x->value.size();
  auto src = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    (*src)[flat] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      off += eff[d];
      if (counter[d] < shape[d]) break;
      off -= eff[d] * counter[d];
      counter[d] = 0;
    }
  }
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = x->value[(*src)[i]];
  return make_result(std::move(shape), std::move(out), {x}, [x, src](Node& self) {
    auto& g = x->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*src)[i]] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x, int a, int b) {
  const std::size_t rank = x.rank();
  std::vector<std::size_t> perm(rank);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[normalize_axis(a, rank)], perm[normalize_axis(b, rank)]);
  return transpose(x, perm);
}

Tensor sum(const Tensor& tx) {
  const NodePtr& x = node_of(tx);
  double total = 0.0;
  for (double v : x->value) total += v;
  return make_result(Shape{}, {total}, {x}, [x](Node& self) {
    auto& g = x->grad_buffer();
    const double s = self.grad[0];
    for (auto& v : g) v += s;
  });
}

Tensor sum(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, 1.0); }

Tensor mean(const Tensor& x) { return sum(x) * (1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const double len = static_cast<double>(x.size(axis));
  return reduce_axis(x, axis, keepdim, 1.0 / len);
}

}  // namespace ovgt
