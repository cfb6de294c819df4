#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bdgstn/tensor.hpp"

namespace bdgstn {

class Node;
using Var = std::shared_ptr<Node>;

/// One recorded operation output. Nodes form an implicit DAG through
/// their parent pointers; backward() replays it in reverse topological
/// order. A graph instance is single-threaded by contract.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads

  Tensor& grad_buf();
  void accumulate(const Tensor& g);
};

Var make_leaf(Tensor value, bool requires_grad = true);
Var make_const(Tensor value);

// Elementwise, same shape unless noted.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var abs(const Var& x);
Var activation(const std::string& kind, const Var& x);  // {relu, sigmoid}
Var clamp_box(const Var& x, const Tensor& lo, const Tensor& hi);

// a is N x N, b is T x N x N; a broadcast across the leading axis.
Var add_broadcast_time(const Var& a, const Var& b);

// Batched matrix product over the last two axes. Leading batch
// dimensions must agree or broadcast from size 1; rank 2 or 3.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T

// Affine map over the last axis: out[..., o] = sum_i x[..., i] w[i, o] + b[o].
Var linear_lastdim(const Var& x, const Var& w, const Var& b);

// Causal dilated 1-d convolution along the time axis with zero left
// padding so the output length equals the input length.
// x: T x Din or N x T x Din; f: r x Din x Dout; bias: Dout or null.
Var causal_conv1d(const Var& x, const Var& f, const Var& bias, int dilation);

// x: N x T x D -> T x N x N with out[t] = X_t X_t^T, X_t[i,:] = x[i,t,:].
Var timewise_gram(const Var& x);

// a: T x N x N (or N x N, reused each step), x: N x T x D -> N x T x D
// with out[:,t,:] = A_t x[:,t,:].
Var timewise_matmul(const Var& a, const Var& x);

// Softmax over the last axis, max-stabilized.
Var row_softmax(const Var& x);

// Centered moving average with edge replication along the time axis
// (axis 0 for rank 2, axis 1 for rank 3); kernel must be odd.
Var moving_average(const Var& x, int kernel);

Var reshape(const Var& x, Shape s);
Var select_lastdim(const Var& x, std::size_t index);
Var stack_lastdim(const std::vector<Var>& xs);

Var sum(const Var& x);
Var mean(const Var& x);

/// Reverse-mode sweep from a scalar loss. Leaf grads accumulate across
/// calls; zero_grad resets them.
void backward(const Var& loss);
void zero_grad(const std::vector<Var>& leaves);

/// Max over coordinates of the relative difference between the analytic
/// gradient of f at x and a central finite difference with step h.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h);

}  // namespace bdgstn
