#include "bdgstn/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace bdgstn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Tensor& Node::grad_buf() {
  if (grad.size() != value.size()) grad = Tensor::zeros_like(value);
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  Tensor& buf = grad_buf();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(back);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) +
                         " vs " + shape_str(b->value.shape()));
}

// Elementwise binary op with custom partials evaluated from the inputs.
template <class F, class DA, class DB>
Var elementwise2(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
  check_same_shape(a, b, name);
  Tensor out = Tensor::zeros_like(a->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i], b->value[i]);
  return make_node(std::move(out), {a, b}, [da, db](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    const std::size_t m = n.value.size();
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buf();
      for (std::size_t i = 0; i < m; ++i) g[i] += n.grad[i] * da(pa.value[i], pb.value[i]);
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buf();
      for (std::size_t i = 0; i < m; ++i) g[i] += n.grad[i] * db(pa.value[i], pb.value[i]);
    }
  });
}

}  // namespace

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var make_const(Tensor value) { return make_leaf(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var scale(const Var& a, double c) {
  Tensor out = Tensor::zeros_like(a->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_node(std::move(out), {a}, [c](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
  });
}

Var relu(const Var& x) {
  Tensor out = Tensor::zeros_like(x->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x->value[i]);
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > 0.0) g[i] += n.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = Tensor::zeros_like(x->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s = n.value[i];
      g[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var abs(const Var& x) {
  Tensor out = Tensor::zeros_like(x->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x->value[i]);
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double v = p.value[i];
      g[i] += n.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var activation(const std::string& kind, const Var& x) {
  if (kind == "relu") return relu(x);
  if (kind == "sigmoid") return sigmoid(x);
  throw ConfigError("unknown activation kind: " + kind);
}

Var clamp_box(const Var& x, const Tensor& lo, const Tensor& hi) {
  const std::size_t m = x->value.size();
  auto bound = [m](const Tensor& t, const char* which) {
    if (t.size() != 1 && t.size() != m)
      throw DimensionError(std::string("clamp_box: ") + which + " bound size mismatch");
  };
  bound(lo, "lower");
  bound(hi, "upper");
  auto lo_at = [&lo](std::size_t i) { return lo.size() == 1 ? lo[0] : lo[i]; };
  auto hi_at = [&hi](std::size_t i) { return hi.size() == 1 ? hi[0] : hi[i]; };
  Tensor out = Tensor::zeros_like(x->value);
  for (std::size_t i = 0; i < m; ++i)
    out[i] = std::min(hi_at(i), std::max(lo_at(i), x->value[i]));
  Tensor lo_c = lo, hi_c = hi;
  return make_node(std::move(out), {x}, [lo_c, hi_c](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double l = lo_c.size() == 1 ? lo_c[0] : lo_c[i];
      double h = hi_c.size() == 1 ? hi_c[0] : hi_c[i];
      if (p.value[i] > l && p.value[i] < h) g[i] += n.grad[i];
    }
  });
}

Var add_broadcast_time(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 2 || bv.rank() != 3 || av.dim(0) != bv.dim(1) || av.dim(1) != bv.dim(2))
    throw DimensionError("add_broadcast_time: expected NxN and TxNxN, got " +
                         shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t t_len = bv.dim(0), nn = av.size();
  Tensor out = Tensor::zeros_like(bv);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t e = 0; e < nn; ++e) out[t * nn + e] = av[e] + bv[t * nn + e];
  return make_node(std::move(out), {a, b}, [t_len, nn](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buf();
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t e = 0; e < nn; ++e) g[e] += n.grad[t * nn + e];
    }
    if (pb.requires_grad) pb.accumulate(n.grad);
  });
}

namespace {

struct BatchView {
  std::size_t batch = 1, rows = 0, cols = 0;
  std::size_t stride = 0;  // elements per batch slice; 0 when broadcast
};

BatchView batch_view(const Tensor& t, const char* op) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1), 0};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2), t.dim(1) * t.dim(2)};
  throw DimensionError(std::string(op) + ": expected rank 2 or 3, got " + shape_str(t.shape()));
}

Var matmul_impl(const Var& a, const Var& b, bool transpose_b) {
  const char* op = transpose_b ? "matmul_nt" : "matmul";
  BatchView va = batch_view(a->value, op);
  BatchView vb = batch_view(b->value, op);
  const std::size_t inner_b = transpose_b ? vb.cols : vb.rows;
  const std::size_t n_out = transpose_b ? vb.rows : vb.cols;
  if (va.cols != inner_b)
    throw DimensionError(std::string(op) + ": inner dimensions disagree, " +
                         shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  if (va.batch != vb.batch && va.batch != 1 && vb.batch != 1)
    throw DimensionError(std::string(op) + ": batch dimensions disagree, " +
                         shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  const std::size_t batch = std::max(va.batch, vb.batch);
  const std::size_t sa = va.batch == 1 ? 0 : va.stride;
  const std::size_t sb = vb.batch == 1 ? 0 : vb.stride;
  Shape out_shape = batch > 1 || a->value.rank() == 3 || b->value.rank() == 3
                        ? Shape{batch, va.rows, n_out}
                        : Shape{va.rows, n_out};
  Tensor out(out_shape);
  const std::size_t so = va.rows * n_out;
  for (std::size_t i = 0; i < batch; ++i) {
    CMapMat ma(a->value.data() + i * sa, va.rows, va.cols);
    CMapMat mb(b->value.data() + i * sb, vb.rows, vb.cols);
    MapMat mo(out.data() + i * so, va.rows, n_out);
    if (transpose_b)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma * mb;
  }
  auto m = va.rows, k = va.cols;
  auto brows = vb.rows, bcols = vb.cols;
  return make_node(std::move(out), {a, b},
                   [batch, sa, sb, so, m, k, n_out, brows, bcols, transpose_b](Node& n) {
                     Node& pa = *n.parents[0];
                     Node& pb = *n.parents[1];
                     for (std::size_t i = 0; i < batch; ++i) {
                       CMapMat g(n.grad.data() + i * so, m, n_out);
                       CMapMat ma(pa.value.data() + i * sa, m, k);
                       CMapMat mb(pb.value.data() + i * sb, brows, bcols);
                       if (pa.requires_grad) {
                         MapMat ga(pa.grad_buf().data() + i * sa, m, k);
                         if (transpose_b)
                           ga.noalias() += g * mb;  // dA = G * B
                         else
                           ga.noalias() += g * mb.transpose();
                       }
                       if (pb.requires_grad) {
                         MapMat gb(pb.grad_buf().data() + i * sb, brows, bcols);
                         if (transpose_b)
                           gb.noalias() += g.transpose() * ma;  // dB = G^T * A
                         else
                           gb.noalias() += ma.transpose() * g;
                       }
                     }
                   });
}

}  // namespace

Var matmul(const Var& a, const Var& b) { return matmul_impl(a, b, false); }
Var matmul_nt(const Var& a, const Var& b) { return matmul_impl(a, b, true); }

Var linear_lastdim(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value;
  if (xv.rank() < 1 || w->value.rank() != 2)
    throw DimensionError("linear_lastdim: bad operand ranks");
  const std::size_t din = xv.dim(xv.rank() - 1);
  const std::size_t dout = w->value.dim(1);
  if (w->value.dim(0) != din)
    throw DimensionError("linear_lastdim: input dim " + std::to_string(din) +
                         " vs weight " + shape_str(w->value.shape()));
  if (b->value.size() != dout)
    throw DimensionError("linear_lastdim: bias size mismatch");
  const std::size_t rows = xv.size() / din;
  Shape out_shape = xv.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  {
    CMapMat mx(xv.data(), rows, din);
    CMapMat mw(w->value.data(), din, dout);
    MapMat mo(out.data(), rows, dout);
    mo.noalias() = mx * mw;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < dout; ++o) out[r * dout + o] += b->value[o];
  }
  return make_node(std::move(out), {x, w, b}, [rows, din, dout](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    Node& pb = *n.parents[2];
    CMapMat g(n.grad.data(), rows, dout);
    if (px.requires_grad) {
      CMapMat mw(pw.value.data(), din, dout);
      MapMat gx(px.grad_buf().data(), rows, din);
      gx.noalias() += g * mw.transpose();
    }
    if (pw.requires_grad) {
      CMapMat mx(px.value.data(), rows, din);
      MapMat gw(pw.grad_buf().data(), din, dout);
      gw.noalias() += mx.transpose() * g;
    }
    if (pb.requires_grad) {
      Tensor& gb = pb.grad_buf();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) gb[o] += n.grad[r * dout + o];
    }
  });
}

Var causal_conv1d(const Var& x, const Var& f, const Var& bias, int dilation) {
  const Tensor& xv = x->value;
  const Tensor& fv = f->value;
  if (fv.rank() != 3) throw DimensionError("causal_conv1d: filter must be r x Din x Dout");
  const std::size_t r = fv.dim(0), din = fv.dim(1), dout = fv.dim(2);
  if (r < 1) throw ConfigError("causal_conv1d: kernel size must be positive");
  if (dilation < 1) throw ConfigError("causal_conv1d: dilation must be positive");
  const bool batched = xv.rank() == 3;
  if (!batched && xv.rank() != 2)
    throw DimensionError("causal_conv1d: input must be T x Din or N x T x Din");
  const std::size_t n = batched ? xv.dim(0) : 1;
  const std::size_t t_len = batched ? xv.dim(1) : xv.dim(0);
  if ((batched ? xv.dim(2) : xv.dim(1)) != din)
    throw DimensionError("causal_conv1d: feature dim mismatch with filter");
  if (bias && bias->value.size() != dout)
    throw DimensionError("causal_conv1d: bias size mismatch");

  Shape out_shape = batched ? Shape{n, t_len, dout} : Shape{t_len, dout};
  Tensor out(out_shape);
  const std::size_t d = static_cast<std::size_t>(dilation);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t o = 0; o < dout; ++o) {
        double acc = bias ? bias->value[o] : 0.0;
        for (std::size_t s = 0; s < r; ++s) {
          if (t < d * s) continue;  // zero left padding
          const std::size_t tau = t - d * s;
          const double* xr = xv.data() + ((b * t_len + tau) * din);
          const double* fr = fv.data() + (s * din * dout);
          for (std::size_t i = 0; i < din; ++i) acc += fr[i * dout + o] * xr[i];
        }
        out[(b * t_len + t) * dout + o] = acc;
      }
  std::vector<Var> parents = {x, f};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents),
                   [n, t_len, din, dout, r, d](Node& nd) {
                     Node& px = *nd.parents[0];
                     Node& pf = *nd.parents[1];
                     Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
                     for (std::size_t b = 0; b < n; ++b)
                       for (std::size_t t = 0; t < t_len; ++t)
                         for (std::size_t o = 0; o < dout; ++o) {
                           const double g = nd.grad[(b * t_len + t) * dout + o];
                           if (g == 0.0) continue;
                           if (pb && pb->requires_grad) pb->grad_buf()[o] += g;
                           for (std::size_t s = 0; s < r; ++s) {
                             if (t < d * s) continue;
                             const std::size_t tau = t - d * s;
                             const double* xr = px.value.data() + ((b * t_len + tau) * din);
                             if (pf.requires_grad) {
                               double* fg = pf.grad_buf().data() + (s * din * dout);
                               for (std::size_t i = 0; i < din; ++i) fg[i * dout + o] += g * xr[i];
                             }
                             if (px.requires_grad) {
                               const double* fr = pf.value.data() + (s * din * dout);
                               double* xg = px.grad_buf().data() + ((b * t_len + tau) * din);
                               for (std::size_t i = 0; i < din; ++i) xg[i] += g * fr[i * dout + o];
                             }
                           }
                         }
                   });
}

namespace {

// Gather x[:, t, :] (N x T x D) into an N x D matrix.
void gather_step(const Tensor& x, std::size_t t, RowMat& m) {
  const std::size_t n = x.dim(0), t_len = x.dim(1), d = x.dim(2);
  m.resize(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = x[(i * t_len + t) * d + j];
}

void scatter_step_add(Tensor& x, std::size_t t, const RowMat& m) {
  const std::size_t n = x.dim(0), t_len = x.dim(1), d = x.dim(2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[(i * t_len + t) * d + j] += m(i, j);
}

}  // namespace

Var timewise_gram(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw DimensionError("timewise_gram: expected N x T x D");
  const std::size_t n = xv.dim(0), t_len = xv.dim(1);
  Tensor out({t_len, n, n});
  RowMat m;
  for (std::size_t t = 0; t < t_len; ++t) {
    gather_step(xv, t, m);
    MapMat mo(out.data() + t * n * n, n, n);
    mo.noalias() = m * m.transpose();
  }
  return make_node(std::move(out), {x}, [n, t_len](Node& nd) {
    Node& px = *nd.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buf();
    RowMat m;
    for (std::size_t t = 0; t < t_len; ++t) {
      gather_step(px.value, t, m);
      CMapMat g(nd.grad.data() + t * n * n, n, n);
      RowMat dm = (g + g.transpose()) * m;
      scatter_step_add(gx, t, dm);
    }
  });
}

Var timewise_matmul(const Var& a, const Var& x) {
  const Tensor& av = a->value;
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw DimensionError("timewise_matmul: features must be N x T x D");
  const std::size_t n = xv.dim(0), t_len = xv.dim(1), d = xv.dim(2);
  const bool dynamic = av.rank() == 3;
  if (dynamic) {
    if (av.dim(0) != t_len || av.dim(1) != n || av.dim(2) != n)
      throw DimensionError("timewise_matmul: adjacency " + shape_str(av.shape()) +
                           " incompatible with features " + shape_str(xv.shape()));
  } else if (av.rank() != 2 || av.dim(0) != n || av.dim(1) != n) {
    throw DimensionError("timewise_matmul: adjacency must be N x N or T x N x N");
  }
  Tensor out({n, t_len, d});
  RowMat m;
  for (std::size_t t = 0; t < t_len; ++t) {
    gather_step(xv, t, m);
    CMapMat ma(av.data() + (dynamic ? t * n * n : 0), n, n);
    RowMat o = ma * m;
    scatter_step_add(out, t, o);
  }
  return make_node(std::move(out), {a, x}, [n, t_len, d, dynamic](Node& nd) {
    Node& pa = *nd.parents[0];
    Node& px = *nd.parents[1];
    RowMat m, g;
    for (std::size_t t = 0; t < t_len; ++t) {
      gather_step(nd.grad, t, g);
      CMapMat ma(pa.value.data() + (dynamic ? t * n * n : 0), n, n);
      if (pa.requires_grad) {
        gather_step(px.value, t, m);
        MapMat ga(pa.grad_buf().data() + (dynamic ? t * n * n : 0), n, n);
        ga.noalias() += g * m.transpose();
      }
      if (px.requires_grad) {
        RowMat dx = ma.transpose() * g;
        scatter_step_add(px.grad_buf(), t, dx);
      }
    }
  });
}

Var row_softmax(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() < 1) throw DimensionError("row_softmax: scalar input");
  const std::size_t w = xv.dim(xv.rank() - 1);
  const std::size_t rows = xv.size() / w;
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * w;
    double* o = out.data() + r * w;
    double mx = in[0];
    for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < w; ++j) o[j] /= sum;
  }
  return make_node(std::move(out), {x}, [rows, w](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& gx = p.grad_buf();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = n.value.data() + r * w;
      const double* g = n.grad.data() + r * w;
      double dot = 0.0;
      for (std::size_t j = 0; j < w; ++j) dot += g[j] * y[j];
      double* out = gx.data() + r * w;
      for (std::size_t j = 0; j < w; ++j) out[j] += y[j] * (g[j] - dot);
    }
  });
}

namespace {

void ma_dims(const Tensor& t, std::size_t& n, std::size_t& t_len, std::size_t& d) {
  if (t.rank() == 2) {
    n = 1;
    t_len = t.dim(0);
    d = t.dim(1);
  } else if (t.rank() == 3) {
    n = t.dim(0);
    t_len = t.dim(1);
    d = t.dim(2);
  } else {
    throw DimensionError("moving_average: expected rank 2 or 3, got " + shape_str(t.shape()));
  }
}

}  // namespace

Var moving_average(const Var& x, int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("moving_average: kernel must be odd and positive, got " +
                      std::to_string(kernel));
  std::size_t n, t_len, d;
  ma_dims(x->value, n, t_len, d);
  if (static_cast<std::size_t>(kernel) > 2 * t_len - 1)
    throw ConfigError("moving_average: kernel exceeds 2T-1");
  const long half = kernel / 2;
  const double inv_k = 1.0 / kernel;
  Tensor out = Tensor::zeros_like(x->value);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (long o = -half; o <= half; ++o) {
          long u = static_cast<long>(t) + o;
          u = std::clamp(u, 0L, static_cast<long>(t_len) - 1);  // edge replication
          acc += x->value[(b * t_len + static_cast<std::size_t>(u)) * d + j];
        }
        out[(b * t_len + t) * d + j] = acc * inv_k;
      }
  return make_node(std::move(out), {x}, [n, t_len, d, half, inv_k](Node& nd) {
    Node& p = *nd.parents[0];
    if (!p.requires_grad) return;
    Tensor& gx = p.grad_buf();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < d; ++j) {
          const double g = nd.grad[(b * t_len + t) * d + j] * inv_k;
          for (long o = -half; o <= half; ++o) {
            long u = static_cast<long>(t) + o;
            u = std::clamp(u, 0L, static_cast<long>(t_len) - 1);
            gx[(b * t_len + static_cast<std::size_t>(u)) * d + j] += g;
          }
        }
  });
}

Var reshape(const Var& x, Shape s) {
  Tensor out = x->value.reshaped(std::move(s));
  return make_node(std::move(out), {x}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.reshaped(n.parents[0]->value.shape()));
  });
}

Var select_lastdim(const Var& x, std::size_t index) {
  const Tensor& xv = x->value;
  if (xv.rank() < 1) throw DimensionError("select_lastdim: scalar input");
  const std::size_t w = xv.dim(xv.rank() - 1);
  if (index >= w) throw DimensionError("select_lastdim: index out of range");
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  const std::size_t rows = xv.size() / w;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) out[r] = xv[r * w + index];
  return make_node(std::move(out), {x}, [rows, w, index](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.grad_buf();
    for (std::size_t r = 0; r < rows; ++r) g[r * w + index] += n.grad[r];
  });
}

Var stack_lastdim(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("stack_lastdim: empty input");
  const Shape base = xs[0]->value.shape();
  for (const auto& v : xs)
    if (v->value.shape() != base) throw DimensionError("stack_lastdim: mixed shapes");
  const std::size_t k = xs.size(), rows = xs[0]->value.size();
  Shape out_shape = base;
  out_shape.push_back(k);
  Tensor out(out_shape);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t r = 0; r < rows; ++r) out[r * k + j] = xs[j]->value[r];
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_node(std::move(out), std::move(parents), [k, rows](Node& n) {
    for (std::size_t j = 0; j < k; ++j) {
      Node& p = *n.parents[j];
      if (!p.requires_grad) continue;
      Tensor& g = p.grad_buf();
      for (std::size_t r = 0; r < rows; ++r) g[r] += n.grad[r * k + j];
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return make_node(Tensor::scalar(acc), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return make_node(Tensor::scalar(acc * inv), {x}, [inv](Node& n) {
    Node& p = *n.parents[0];
    Tensor& g = p.grad_buf();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * inv;
  });
}

void backward(const Var& loss) {
  if (loss->value.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  // Iterative post-order DFS for a deterministic topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch space for this sweep; only leaf grads
  // accumulate across calls.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor::zeros_like(n->value);

  loss->grad_buf()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

void zero_grad(const std::vector<Var>& leaves) {
  for (const auto& v : leaves) v->grad = Tensor::zeros_like(v->value);
}

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_check: step must be positive");
  Var leaf = make_leaf(x, true);
  Var out = f(leaf);
  backward(out);
  const Tensor analytic = leaf->grad_buf();
  double max_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(make_leaf(xp, false))->value[0];
    const double fm = f(make_leaf(xm, false))->value[0];
    const double numeric = (fp - fm) / (2.0 * h);
    const double err =
        std::fabs(analytic[i] - numeric) / (std::fabs(analytic[i]) + std::fabs(numeric) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace bdgstn
