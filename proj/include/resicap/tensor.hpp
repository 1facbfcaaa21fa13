#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "resicap/errors.hpp"

namespace resicap {

// Deterministic uniform double in [0,1) from raw mt19937_64 output. Used
// instead of std::uniform_real_distribution so results do not depend on the
// standard library implementation.
inline double rand_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Deterministic integer in [0, n) via rejection sampling (unbiased).
inline std::uint64_t rand_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw UsageError("rand_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // accumulates (+=) into parents' grad
};

// Value-semantic handle to a node in the autodiff graph. Copying a Tensor
// aliases the same node. All data is double precision in a flat row-major
// buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
  static Tensor from_values(const std::vector<int>& shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Elementwise uniform in [lo, hi).
  static Tensor uniform(const std::vector<int>& shape, double lo, double hi,
                        std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return node_ref().shape; }
  int rank() const { return static_cast<int>(node_ref().shape.size()); }
  std::size_t size() const { return node_ref().values.size(); }
  const std::vector<double>& values() const { return node_ref().values; }
  std::vector<double>& mutable_values() { return node_ref().values; }
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad();
  bool requires_grad() const { return node_ref().requires_grad; }

  // Value of a rank-0 (or single-element) tensor.
  double item() const;
  double at(const std::vector<int>& index) const;

  void zero_grad();  // this node only; no-op when requires_grad is false
  // Reverse-mode sweep from a scalar root: seeds d(root)=1, walks the graph in
  // reverse topological order, accumulates additively into every
  // requires_grad node reachable from the root. Callers are responsible for
  // zeroing grads between backward passes.
  void backward() const;

  const std::shared_ptr<TensorNode>& node() const { return n_; }

 private:
  TensorNode& node_ref() const {
    if (!n_) throw UsageError("operation on an empty Tensor handle");
    return *n_;
  }
  std::shared_ptr<TensorNode> n_;
};

std::size_t shape_size(const std::vector<int>& shape);

// --- elementwise / arithmetic -----------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
// Multiply every element of x by a rank-0 tensor s (gradients flow to both).
Tensor scale(const Tensor& x, const Tensor& s);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// Inverted dropout: in training mode zeroes each element with probability
// `rate` and scales survivors by 1/(1-rate); identity in eval mode.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

// --- linear algebra ---------------------------------------------------------
// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// x: (N,H,W,Cin), kernels: (kh,kw,Cin,Cout) -> (N,OH,OW,Cout), zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride, int padding);

// --- reductions / normalizations --------------------------------------------
// Reduced axes are removed from the shape; reducing all axes yields rank 0.
Tensor reduce_sum(const Tensor& x, const std::vector<int>& axes);
Tensor reduce_mean(const Tensor& x, const std::vector<int>& axes);
// Softmax jointly over the given axes (each slice over the remaining axes
// sums to 1). Uses max subtraction for stability.
Tensor softmax(const Tensor& x, const std::vector<int>& axes);
// Numerically stable log softmax over a rank-1 tensor.
Tensor log_softmax(const Tensor& x);

// --- shape ops --------------------------------------------------------------
Tensor reshape(const Tensor& x, const std::vector<int>& new_shape);
// Broadcast x to target_shape by inserting the given new axes (positions in
// the target shape). The retained axes must match x's shape in order.
Tensor expand(const Tensor& x, const std::vector<int>& target_shape,
              const std::vector<int>& new_axes);
// Convenience: infer new axes greedily left-to-right.
Tensor expand(const Tensor& x, const std::vector<int>& target_shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
// Stack rank-r tensors with identical shape into rank r+1 (new leading axis).
Tensor stack(const std::vector<Tensor>& xs);
// Contiguous slab [start, start+len) along one axis.
Tensor narrow(const Tensor& x, int axis, int start, int len);
// Row lookup in a rank-2 matrix (embedding style): (R,C) -> (C,).
Tensor select_row(const Tensor& m, int row);
// Single element of a rank-1 tensor as rank-0.
Tensor pick(const Tensor& v, int index);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return hadamard(a, b); }

// --- optimizer --------------------------------------------------------------
// Adam with bias correction. step() consumes the current grads (which the
// caller filled via backward) and then zeroes them.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  std::int64_t step_count() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace resicap
