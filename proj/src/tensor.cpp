#include "resicap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace resicap {

namespace {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

void check_shape(const std::vector<int>& shape) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
  }
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values.assign(shape_size(n->shape), 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->values.size(), 0.0);
  return n;
}

// Result node whose requires_grad follows from its parents.
std::shared_ptr<TensorNode> make_result(std::vector<int> shape,
                                        std::vector<std::shared_ptr<TensorNode>> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = make_node(std::move(shape), rg);
  n->parents = std::move(parents);
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Checks axes are unique, sorted ascending and within [0, rank).
void check_axes(const std::vector<int>& axes, int rank, const char* op) {
  if (axes.empty()) throw DimensionError(std::string(op) + ": empty axis list");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 0 || axes[i] >= rank) {
      throw DimensionError(std::string(op) + ": axis out of range");
    }
    if (i > 0 && axes[i] <= axes[i - 1]) {
      throw DimensionError(std::string(op) + ": axes must be strictly increasing");
    }
  }
}

// Partition of a shape into "group" axes (kept) and "member" axes (listed).
// group_of[flat] is the flat index over the kept axes; elements sharing a
// group id form one slice over the listed axes.
struct AxisSplit {
  std::vector<int> kept_shape;
  std::size_t kept_size = 1;
  std::size_t member_size = 1;
  std::vector<std::size_t> group_of;
};

AxisSplit split_axes(const std::vector<int>& shape, const std::vector<int>& axes) {
  const int rank = static_cast<int>(shape.size());
  std::vector<bool> listed(rank, false);
  for (int a : axes) listed[a] = true;

  AxisSplit s;
  for (int i = 0; i < rank; ++i) {
    if (listed[i]) {
      s.member_size *= static_cast<std::size_t>(shape[i]);
    } else {
      s.kept_shape.push_back(shape[i]);
      s.kept_size *= static_cast<std::size_t>(shape[i]);
    }
  }
  const std::size_t total = shape_size(shape);
  s.group_of.resize(total);
  std::vector<int> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t g = 0;
    for (int i = 0; i < rank; ++i) {
      if (!listed[i]) g = g * static_cast<std::size_t>(shape[i]) + static_cast<std::size_t>(idx[i]);
    }
    s.group_of[flat] = g;
    for (int i = rank - 1; i >= 0; --i) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return s;
}

}  // namespace

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  return Tensor(make_node(shape, requires_grad));
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  auto n = make_node(shape, requires_grad);
  std::fill(n->values.begin(), n->values.end(), value);
  return Tensor(std::move(n));
}

Tensor Tensor::from_values(const std::vector<int>& shape, std::vector<double> values,
                           bool requires_grad) {
  auto n = make_node(shape, requires_grad);
  if (values.size() != n->values.size()) {
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  }
  n->values = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

Tensor Tensor::uniform(const std::vector<int>& shape, double lo, double hi,
                       std::mt19937_64& rng, bool requires_grad) {
  auto n = make_node(shape, requires_grad);
  for (double& v : n->values) v = lo + (hi - lo) * rand_uniform(rng);
  return Tensor(std::move(n));
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ref().requires_grad) throw UsageError("grad() on a tensor without requires_grad");
  return node_ref().grad;
}

std::vector<double>& Tensor::mutable_grad() {
  if (!node_ref().requires_grad) throw UsageError("grad() on a tensor without requires_grad");
  return node_ref().grad;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on a tensor with " + std::to_string(size()) + " elements");
  return node_ref().values[0];
}

double Tensor::at(const std::vector<int>& index) const {
  const auto& shape = node_ref().shape;
  if (index.size() != shape.size()) throw DimensionError("at: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (index[i] < 0 || index[i] >= shape[i]) throw DimensionError("at: index out of range");
    flat = flat * static_cast<std::size_t>(shape[i]) + static_cast<std::size_t>(index[i]);
  }
  return node_ref().values[flat];
}

void Tensor::zero_grad() {
  auto& n = node_ref();
  if (n.requires_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::backward() const {
  TensorNode& root = node_ref();
  if (!root.shape.empty()) {
    throw UsageError("backward() requires a rank-0 root, got " + shape_str(root.shape));
  }
  if (!root.requires_grad) {
    throw UsageError("backward() on a tensor that does not require gradients");
  }

  // Post-order DFS, then run backward hooks in reverse topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

// --- elementwise ------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd_factor) {
  auto out = make_result(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = fwd(xv[i]);
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, bwd_factor] {
      for (std::size_t i = 0; i < xn->grad.size(); ++i) {
        xn->grad[i] += o->grad[i] * bwd_factor(xn->values[i], o->values[i]);
      }
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = make_result(a.shape(), {a.node(), b.node()});
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] + bv[i];
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode* o = out.get();
    out->backward_fn = [an, bn, o] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i];
    };
  }
  return Tensor(std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = make_result(a.shape(), {a.node(), b.node()});
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] - bv[i];
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode* o = out.get();
    out->backward_fn = [an, bn, o] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] -= o->grad[i];
    };
  }
  return Tensor(std::move(out));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  auto out = make_result(a.shape(), {a.node(), b.node()});
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] * bv[i];
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode* o = out.get();
    out->backward_fn = [an, bn, o] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->values[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->values[i];
    };
  }
  return Tensor(std::move(out));
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.rank() != 0) throw DimensionError("scale: scalar operand must be rank 0");
  auto out = make_result(x.shape(), {x.node(), s.node()});
  const double sv = s.values()[0];
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = xv[i] * sv;
  if (out->requires_grad) {
    auto xn = x.node(), sn = s.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, sn, o] {
      const double sv2 = sn->values[0];
      if (xn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i] * sv2;
      if (sn->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < o->grad.size(); ++i) acc += o->grad[i] * xn->values[i];
        sn->grad[0] += acc;
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor tanh(const Tensor& x) {
  return unary_op(x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw InputError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    // Identity pass-through that still participates in the graph.
    return mul_scalar(x, 1.0);
  }
  auto mask = std::make_shared<std::vector<double>>(x.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : *mask) m = rand_uniform(rng) < rate ? 0.0 : keep_scale;

  auto out = make_result(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = xv[i] * (*mask)[i];
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, mask] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i] * (*mask)[i];
    };
  }
  return Tensor(std::move(out));
}

// --- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank 2");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  auto out = make_result({m, n}, {a.node(), b.node()});
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out->values.data();
    for (int i = 0; i < m; ++i) {
      double* orow = ov + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double aval = av[static_cast<std::size_t>(i) * k + p];
        const double* brow = bv + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
      }
    }
  }
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode* o = out.get();
    out->backward_fn = [an, bn, o, m, k, n] {
      const double* g = o->grad.data();
      if (an->requires_grad) {
        double* ga = an->grad.data();
        const double* bv = bn->values.data();
        for (int i = 0; i < m; ++i) {
          const double* grow = g + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double* brow = bv + static_cast<std::size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[static_cast<std::size_t>(i) * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad.data();
        const double* av = an->values.data();
        for (int i = 0; i < m; ++i) {
          const double* grow = g + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double aval = av[static_cast<std::size_t>(i) * k + p];
            double* gbrow = gb + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += aval * grow[j];
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride, int padding) {
  if (x.rank() != 4 || kernels.rank() != 4) {
    throw DimensionError("conv2d: input must be (N,H,W,C), kernels (kh,kw,Cin,Cout)");
  }
  if (stride <= 0) throw DimensionError("conv2d: stride must be positive");
  if (padding < 0) throw DimensionError("conv2d: padding must be non-negative");
  const int N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
  const int KH = kernels.shape()[0], KW = kernels.shape()[1];
  const int KC = kernels.shape()[2], CO = kernels.shape()[3];
  if (KC != C) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(KC) + " channels, input has " +
                         std::to_string(C));
  }
  const int oh_num = H + 2 * padding - KH;
  const int ow_num = W + 2 * padding - KW;
  if (oh_num < 0 || ow_num < 0) throw DimensionError("conv2d: kernel larger than padded input");
  const int OH = oh_num / stride + 1;
  const int OW = ow_num / stride + 1;

  auto out = make_result({N, OH, OW, CO}, {x.node(), kernels.node()});
  const double* xv = x.values().data();
  const double* kv = kernels.values().data();
  double* ov = out->values.data();
  for (int n = 0; n < N; ++n) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        double* opix = ov + (((static_cast<std::size_t>(n) * OH + oy) * OW + ox) * CO);
        for (int ky = 0; ky < KH; ++ky) {
          const int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < KW; ++kx) {
            const int ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= W) continue;
            const double* xpix = xv + (((static_cast<std::size_t>(n) * H + iy) * W + ix) * C);
            const double* krow = kv + ((static_cast<std::size_t>(ky) * KW + kx) * C) * CO;
            for (int ci = 0; ci < C; ++ci) {
              const double a = xpix[ci];
              const double* kk = krow + static_cast<std::size_t>(ci) * CO;
              for (int co = 0; co < CO; ++co) opix[co] += a * kk[co];
            }
          }
        }
      }
    }
  }
  if (out->requires_grad) {
    auto xn = x.node(), kn = kernels.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, kn, o, N, H, W, C, KH, KW, CO, OH, OW, stride, padding] {
      const double* g = o->grad.data();
      const double* xv2 = xn->values.data();
      const double* kv2 = kn->values.data();
      const bool dx = xn->requires_grad;
      const bool dk = kn->requires_grad;
      double* gx = dx ? xn->grad.data() : nullptr;
      double* gk = dk ? kn->grad.data() : nullptr;
      for (int n = 0; n < N; ++n) {
        for (int oy = 0; oy < OH; ++oy) {
          for (int ox = 0; ox < OW; ++ox) {
            const double* gpix = g + (((static_cast<std::size_t>(n) * OH + oy) * OW + ox) * CO);
            for (int ky = 0; ky < KH; ++ky) {
              const int iy = oy * stride + ky - padding;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < KW; ++kx) {
                const int ix = ox * stride + kx - padding;
                if (ix < 0 || ix >= W) continue;
                const std::size_t xoff = ((static_cast<std::size_t>(n) * H + iy) * W + ix) * C;
                const std::size_t koff = (static_cast<std::size_t>(ky) * KW + kx) * C * CO;
                if (dk) {
                  const double* xpix = xv2 + xoff;
                  double* gkrow = gk + koff;
                  for (int ci = 0; ci < C; ++ci) {
                    const double a = xpix[ci];
                    double* kk = gkrow + static_cast<std::size_t>(ci) * CO;
                    for (int co = 0; co < CO; ++co) kk[co] += a * gpix[co];
                  }
                }
                if (dx) {
                  double* gxpix = gx + xoff;
                  const double* krow = kv2 + koff;
                  for (int ci = 0; ci < C; ++ci) {
                    const double* kk = krow + static_cast<std::size_t>(ci) * CO;
                    double acc = 0.0;
                    for (int co = 0; co < CO; ++co) acc += kk[co] * gpix[co];
                    gxpix[ci] += acc;
                  }
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

// --- reductions -------------------------------------------------------------

namespace {

Tensor reduce_impl(const Tensor& x, const std::vector<int>& axes, bool mean, const char* op) {
  check_axes(axes, x.rank(), op);
  auto split = std::make_shared<AxisSplit>(split_axes(x.shape(), axes));
  const double w = mean ? 1.0 / static_cast<double>(split->member_size) : 1.0;
  auto out = make_result(split->kept_shape, {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[split->group_of[i]] += xv[i] * w;
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, split, w] {
      for (std::size_t i = 0; i < xn->grad.size(); ++i) {
        xn->grad[i] += o->grad[split->group_of[i]] * w;
      }
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor reduce_sum(const Tensor& x, const std::vector<int>& axes) {
  return reduce_impl(x, axes, false, "reduce_sum");
}

Tensor reduce_mean(const Tensor& x, const std::vector<int>& axes) {
  return reduce_impl(x, axes, true, "reduce_mean");
}

Tensor softmax(const Tensor& x, const std::vector<int>& axes) {
  check_axes(axes, x.rank(), "softmax");
  auto split = std::make_shared<AxisSplit>(split_axes(x.shape(), axes));
  auto out = make_result(x.shape(), {x.node()});
  const auto& xv = x.values();
  std::vector<double> mx(split->kept_size, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mx[split->group_of[i]] = std::max(mx[split->group_of[i]], xv[i]);
  }
  std::vector<double> denom(split->kept_size, 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out->values[i] = std::exp(xv[i] - mx[split->group_of[i]]);
    denom[split->group_of[i]] += out->values[i];
  }
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] /= denom[split->group_of[i]];
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, split] {
      // dx_i = p_i * (g_i - sum_j p_j g_j) within each group.
      std::vector<double> dot(split->kept_size, 0.0);
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        dot[split->group_of[i]] += o->values[i] * o->grad[i];
      }
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xn->grad[i] += o->values[i] * (o->grad[i] - dot[split->group_of[i]]);
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 1) throw DimensionError("log_softmax: input must be rank 1");
  auto out = make_result(x.shape(), {x.node()});
  const auto& xv = x.values();
  const double mx = *std::max_element(xv.begin(), xv.end());
  double sum = 0.0;
  for (double v : xv) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = xv[i] - lse;
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o] {
      double gsum = 0.0;
      for (double g : o->grad) gsum += g;
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xn->grad[i] += o->grad[i] - std::exp(o->values[i]) * gsum;
      }
    };
  }
  return Tensor(std::move(out));
}

// --- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& x, const std::vector<int>& new_shape) {
  check_shape(new_shape);
  if (shape_size(new_shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  }
  auto out = make_result(new_shape, {x.node()});
  out->values = x.values();
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
    };
  }
  return Tensor(std::move(out));
}

Tensor expand(const Tensor& x, const std::vector<int>& target_shape,
              const std::vector<int>& new_axes) {
  check_shape(target_shape);
  const int trank = static_cast<int>(target_shape.size());
  check_axes(new_axes, trank, "expand");
  if (static_cast<int>(new_axes.size()) + x.rank() != trank) {
    throw DimensionError("expand: axis count mismatch");
  }
  // The kept axes of the target, in order, must match x exactly.
  {
    std::vector<bool> is_new(trank, false);
    for (int a : new_axes) is_new[a] = true;
    int xi = 0;
    for (int i = 0; i < trank; ++i) {
      if (is_new[i]) continue;
      if (target_shape[i] != x.shape()[xi]) {
        throw DimensionError("expand: target " + shape_str(target_shape) +
                             " does not embed source " + shape_str(x.shape()));
      }
      ++xi;
    }
  }
  auto split = std::make_shared<AxisSplit>(split_axes(target_shape, new_axes));
  auto out = make_result(target_shape, {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = xv[split->group_of[i]];
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, split] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xn->grad[split->group_of[i]] += o->grad[i];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor expand(const Tensor& x, const std::vector<int>& target_shape) {
  // Greedy left-to-right matching of x's axes against the target.
  std::vector<int> new_axes;
  int xi = 0;
  for (int i = 0; i < static_cast<int>(target_shape.size()); ++i) {
    if (xi < x.rank() && target_shape[i] == x.shape()[xi]) {
      ++xi;
    } else {
      new_axes.push_back(i);
    }
  }
  if (xi != x.rank()) {
    throw DimensionError("expand: cannot match " + shape_str(x.shape()) + " into " +
                         shape_str(target_shape));
  }
  return expand(x, target_shape, new_axes);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank) throw DimensionError("concat: axis out of range");
  std::vector<int> out_shape = xs[0].shape();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i].rank() != rank) throw DimensionError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == axis) continue;
      if (xs[i].shape()[d] != out_shape[d]) {
        throw DimensionError("concat: shape mismatch on non-concat axis");
      }
    }
    out_shape[axis] += xs[i].shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_shape[d]);

  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& t : xs) parents.push_back(t.node());
  auto out = make_result(out_shape, parents);
  const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;
  std::size_t col_off = 0;
  for (const auto& t : xs) {
    const std::size_t row = static_cast<std::size_t>(t.shape()[axis]) * inner;
    const double* src = t.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out->values.data() + o * out_row + col_off, src + o * row, row * sizeof(double));
    }
    col_off += row;
  }
  if (out->requires_grad) {
    TensorNode* o = out.get();
    out->backward_fn = [o, parents, outer, inner, out_row, axis] {
      std::size_t off = 0;
      for (const auto& p : parents) {
        const std::size_t row = static_cast<std::size_t>(p->shape[axis]) * inner;
        if (p->requires_grad) {
          for (std::size_t i = 0; i < outer; ++i) {
            const double* g = o->grad.data() + i * out_row + off;
            double* dst = p->grad.data() + i * row;
            for (std::size_t j = 0; j < row; ++j) dst[j] += g[j];
          }
        }
        off += row;
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor stack(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw DimensionError("stack: no inputs");
  for (const auto& t : xs) {
    if (t.shape() != xs[0].shape()) throw DimensionError("stack: shape mismatch");
  }
  std::vector<int> out_shape;
  out_shape.push_back(static_cast<int>(xs.size()));
  out_shape.insert(out_shape.end(), xs[0].shape().begin(), xs[0].shape().end());

  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& t : xs) parents.push_back(t.node());
  auto out = make_result(out_shape, parents);
  const std::size_t block = xs[0].size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::memcpy(out->values.data() + i * block, xs[i].values().data(), block * sizeof(double));
  }
  if (out->requires_grad) {
    TensorNode* o = out.get();
    out->backward_fn = [o, parents, block] {
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (!parents[i]->requires_grad) continue;
        const double* g = o->grad.data() + i * block;
        double* dst = parents[i]->grad.data();
        for (std::size_t j = 0; j < block; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor narrow(const Tensor& x, int axis, int start, int len) {
  const int rank = x.rank();
  if (axis < 0 || axis >= rank) throw DimensionError("narrow: axis out of range");
  if (start < 0 || len <= 0 || start + len > x.shape()[axis]) {
    throw DimensionError("narrow: window out of range");
  }
  std::vector<int> out_shape = x.shape();
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(x.shape()[d]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(x.shape()[d]);
  const std::size_t in_row = static_cast<std::size_t>(x.shape()[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(len) * inner;
  const std::size_t skip = static_cast<std::size_t>(start) * inner;

  auto out = make_result(out_shape, {x.node()});
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out->values.data() + o * out_row, x.values().data() + o * in_row + skip,
                out_row * sizeof(double));
  }
  if (out->requires_grad) {
    auto xn = x.node();
    TensorNode* o = out.get();
    out->backward_fn = [xn, o, outer, in_row, out_row, skip] {
      for (std::size_t i = 0; i < outer; ++i) {
        const double* g = o->grad.data() + i * out_row;
        double* dst = xn->grad.data() + i * in_row + skip;
        for (std::size_t j = 0; j < out_row; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor select_row(const Tensor& m, int row) {
  if (m.rank() != 2) throw DimensionError("select_row: input must be rank 2");
  if (row < 0 || row >= m.shape()[0]) throw DimensionError("select_row: row out of range");
  return reshape(narrow(m, 0, row, 1), {m.shape()[1]});
}

Tensor pick(const Tensor& v, int index) {
  if (v.rank() != 1) throw DimensionError("pick: input must be rank 1");
  if (index < 0 || index >= v.shape()[0]) throw DimensionError("pick: index out of range");
  return reshape(narrow(v, 0, index, 1), {});
}

// --- optimizer --------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    if (!p.defined()) throw UsageError("AdamOptimizer: undefined parameter tensor");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].requires_grad()) {
      throw UsageError("AdamOptimizer: parameter without gradient buffer");
    }
    auto& vals = params_[i].mutable_values();
    auto& grads = params_[i].mutable_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = grads[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    std::fill(grads.begin(), grads.end(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace resicap
