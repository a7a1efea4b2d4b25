#pragma once

// Minimal reverse-mode automatic differentiation. A computation graph is a
// DAG of Var nodes created in program order; backward() replays the recorded
// closures in reverse creation order. One graph instance is single-threaded;
// distinct graphs (with their own parameter copies) may run concurrently.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "asfm/core.hpp"
#include "asfm/tensor.hpp"

namespace asfm::ad {

class Var;
using VarPtr = std::shared_ptr<Var>;

class Var {
 public:
  Tensor val;
  Tensor grad;  // empty until backward deposits into it
  bool requires_grad = false;
  std::vector<VarPtr> parents;
  std::function<void(Var&)> backprop;  // pushes this->grad into parents
  std::uint64_t seq = 0;

  Var() : seq(next_seq()) {}

  bool has_grad() const { return !grad.v.empty(); }

  Tensor& ensure_grad() {
    if (grad.v.empty()) grad = Tensor::zeros(val.shape);
    return grad;
  }

 private:
  static std::uint64_t next_seq() {
    static std::atomic<std::uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }
};

inline VarPtr leaf(Tensor value, bool requires_grad) {
  auto v = std::make_shared<Var>();
  v->val = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

inline VarPtr constant(Tensor value) { return leaf(std::move(value), false); }
inline VarPtr parameter(Tensor value) { return leaf(std::move(value), true); }

// Factory for derived nodes. The closure is installed only when some parent
// participates in differentiation.
inline VarPtr make_op(Tensor value, std::vector<VarPtr> parents,
                      std::function<void(Var&)> backprop) {
  auto v = std::make_shared<Var>();
  v->val = std::move(value);
  v->parents = std::move(parents);
  for (const VarPtr& p : v->parents) v->requires_grad = v->requires_grad || p->requires_grad;
  if (v->requires_grad) v->backprop = std::move(backprop);
  return v;
}

inline void add_into(Tensor& acc, const Tensor& g, double s = 1.0) {
  for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += s * g.v[i];
}

// ---- elementwise and structural ops ----------------------------------------

inline VarPtr add(const VarPtr& a, const VarPtr& b) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument("add: shape mismatch " + a->val.shape_str() + " vs " +
                                b->val.shape_str());
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->val.v[i];
  return make_op(std::move(out), {a, b}, [](Var& self) {
    Var& a = *self.parents[0];
    Var& b = *self.parents[1];
    if (a.requires_grad) add_into(a.ensure_grad(), self.grad);
    if (b.requires_grad) add_into(b.ensure_grad(), self.grad);
  });
}

inline VarPtr scale(const VarPtr& a, double s) {
  Tensor out = a->val;
  for (double& x : out.v) x *= s;
  return make_op(std::move(out), {a}, [s](Var& self) {
    Var& a = *self.parents[0];
    if (a.requires_grad) add_into(a.ensure_grad(), self.grad, s);
  });
}

inline VarPtr mul(const VarPtr& a, const VarPtr& b) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument("mul: shape mismatch " + a->val.shape_str() + " vs " +
                                b->val.shape_str());
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->val.v[i];
  return make_op(std::move(out), {a, b}, [](Var& self) {
    Var& a = *self.parents[0];
    Var& b = *self.parents[1];
    if (a.requires_grad) {
      Tensor& g = a.ensure_grad();
      for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += self.grad.v[i] * b.val.v[i];
    }
    if (b.requires_grad) {
      Tensor& g = b.ensure_grad();
      for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += self.grad.v[i] * a.val.v[i];
    }
  });
}

inline VarPtr sum(const VarPtr& a) {
  double s = 0.0;
  for (double x : a->val.v) s += x;
  return make_op(Tensor::scalar(s), {a}, [](Var& self) {
    Var& a = *self.parents[0];
    if (!a.requires_grad) return;
    Tensor& g = a.ensure_grad();
    const double gy = self.grad.v[0];
    for (double& x : g.v) x += gy;
  });
}

inline VarPtr relu(const VarPtr& a) {
  Tensor out = a->val;
  for (double& x : out.v)
    if (x < 0.0) x = 0.0;
  return make_op(std::move(out), {a}, [](Var& self) {
    Var& a = *self.parents[0];
    if (!a.requires_grad) return;
    Tensor& g = a.ensure_grad();
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (a.val.v[i] > 0.0) g.v[i] += self.grad.v[i];
  });
}

inline VarPtr reshape(const VarPtr& a, std::vector<std::int64_t> shape) {
  if (Tensor::numel_of(shape) != a->val.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(std::move(shape), a->val.v);
  return make_op(std::move(out), {a}, [](Var& self) {
    Var& a = *self.parents[0];
    if (!a.requires_grad) return;
    Tensor& g = a.ensure_grad();
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += self.grad.v[i];
  });
}

// ---- dense (affine) layer ---------------------------------------------------

// y[i,j] = b[j] + sum_k x[i,k] * w[k,j]; x: [B, Din], w: [Din, Dout], b: [Dout].
inline VarPtr dense(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
  if (x->val.rank() != 2 || w->val.rank() != 2 || b->val.rank() != 1)
    throw std::invalid_argument("dense: expected ranks x:2 w:2 b:1");
  const std::int64_t B = x->val.dim(0), din = x->val.dim(1);
  const std::int64_t dout = w->val.dim(1);
  if (w->val.dim(0) != din || b->val.dim(0) != dout)
    throw std::invalid_argument("dense: shape mismatch x" + x->val.shape_str() + " w" +
                                w->val.shape_str() + " b" + b->val.shape_str());
  Tensor out = Tensor::zeros({B, dout});
  {
    const double* xp = x->val.v.data();
    const double* wp = w->val.v.data();
    const double* bp = b->val.v.data();
    double* yp = out.v.data();
    for (std::int64_t i = 0; i < B; ++i) {
      double* yrow = yp + i * dout;
      for (std::int64_t j = 0; j < dout; ++j) yrow[j] = bp[j];
      const double* xrow = xp + i * din;
      for (std::int64_t k = 0; k < din; ++k) {
        const double a = xrow[k];
        const double* wrow = wp + k * dout;
        for (std::int64_t j = 0; j < dout; ++j) yrow[j] += a * wrow[j];
      }
    }
  }
  return make_op(std::move(out), {x, w, b}, [B, din, dout](Var& self) {
    Var& x = *self.parents[0];
    Var& w = *self.parents[1];
    Var& b = *self.parents[2];
    const double* gy = self.grad.v.data();
    if (x.requires_grad) {
      double* gx = x.ensure_grad().v.data();
      const double* wp = w.val.v.data();
      for (std::int64_t i = 0; i < B; ++i) {
        const double* gyrow = gy + i * dout;
        double* gxrow = gx + i * din;
        for (std::int64_t k = 0; k < din; ++k) {
          const double* wrow = wp + k * dout;
          double acc = 0.0;
          for (std::int64_t j = 0; j < dout; ++j) acc += gyrow[j] * wrow[j];
          gxrow[k] += acc;
        }
      }
    }
    if (w.requires_grad) {
      double* gw = w.ensure_grad().v.data();
      const double* xp = x.val.v.data();
      for (std::int64_t i = 0; i < B; ++i) {
        const double* xrow = xp + i * din;
        const double* gyrow = gy + i * dout;
        for (std::int64_t k = 0; k < din; ++k) {
          const double a = xrow[k];
          if (a == 0.0) continue;
          double* gwrow = gw + k * dout;
          for (std::int64_t j = 0; j < dout; ++j) gwrow[j] += a * gyrow[j];
        }
      }
    }
    if (b.requires_grad) {
      double* gb = b.ensure_grad().v.data();
      for (std::int64_t i = 0; i < B; ++i) {
        const double* gyrow = gy + i * dout;
        for (std::int64_t j = 0; j < dout; ++j) gb[j] += gyrow[j];
      }
    }
  });
}

// ---- point-set ops ----------------------------------------------------------

// Per-channel max over the point axis: [B, N, D] -> [B, D]. Gradient routes
// to the argmax position; ties go to the lowest point index.
inline VarPtr maxpool_points(const VarPtr& x) {
  if (x->val.rank() != 3) throw std::invalid_argument("maxpool_points: expected [B,N,D]");
  const std::int64_t B = x->val.dim(0), N = x->val.dim(1), D = x->val.dim(2);
  if (N < 1) throw std::invalid_argument("maxpool_points: N must be >= 1");
  Tensor out = Tensor::zeros({B, D});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(B * D), 0);
  for (std::int64_t i = 0; i < B; ++i) {
    for (std::int64_t d = 0; d < D; ++d) {
      double best = x->val.at((i * N) * D + d);
      std::int64_t besti = 0;
      for (std::int64_t n = 1; n < N; ++n) {
        const double v = x->val.at((i * N + n) * D + d);
        if (v > best) {
          best = v;
          besti = n;
        }
      }
      out.at(i * D + d) = best;
      (*argmax)[static_cast<std::size_t>(i * D + d)] = besti;
    }
  }
  return make_op(std::move(out), {x}, [B, N, D, argmax](Var& self) {
    Var& x = *self.parents[0];
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::int64_t i = 0; i < B; ++i)
      for (std::int64_t d = 0; d < D; ++d) {
        const std::int64_t n = (*argmax)[static_cast<std::size_t>(i * D + d)];
        g.at((i * N + n) * D + d) += self.grad.at(i * D + d);
      }
  });
}

// Tile a [B, D] feature over a new point axis: -> [B, N, D].
inline VarPtr expand_points(const VarPtr& x, std::int64_t n) {
  if (x->val.rank() != 2) throw std::invalid_argument("expand_points: expected [B,D]");
  if (n < 1) throw std::invalid_argument("expand_points: N must be >= 1");
  const std::int64_t B = x->val.dim(0), D = x->val.dim(1);
  Tensor out = Tensor::zeros({B, n, D});
  for (std::int64_t i = 0; i < B; ++i)
    for (std::int64_t k = 0; k < n; ++k)
      for (std::int64_t d = 0; d < D; ++d) out.at((i * n + k) * D + d) = x->val.at(i * D + d);
  return make_op(std::move(out), {x}, [B, n, D](Var& self) {
    Var& x = *self.parents[0];
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::int64_t i = 0; i < B; ++i)
      for (std::int64_t k = 0; k < n; ++k)
        for (std::int64_t d = 0; d < D; ++d) g.at(i * D + d) += self.grad.at((i * n + k) * D + d);
  });
}

// Interleaved row replication: row i of [N, D] appears at rows i*r .. i*r+r-1.
inline VarPtr repeat_rows(const VarPtr& x, std::int64_t r) {
  if (x->val.rank() != 2) throw std::invalid_argument("repeat_rows: expected [N,D]");
  if (r < 1) throw std::invalid_argument("repeat_rows: factor must be >= 1");
  const std::int64_t N = x->val.dim(0), D = x->val.dim(1);
  Tensor out = Tensor::zeros({N * r, D});
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t k = 0; k < r; ++k)
      for (std::int64_t d = 0; d < D; ++d) out.at((i * r + k) * D + d) = x->val.at(i * D + d);
  return make_op(std::move(out), {x}, [N, r, D](Var& self) {
    Var& x = *self.parents[0];
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::int64_t i = 0; i < N; ++i)
      for (std::int64_t k = 0; k < r; ++k)
        for (std::int64_t d = 0; d < D; ++d) g.at(i * D + d) += self.grad.at((i * r + k) * D + d);
  });
}

// Broadcast a single row [1, D] to [M, D].
inline VarPtr tile_rows(const VarPtr& x, std::int64_t m) {
  if (x->val.rank() != 2 || x->val.dim(0) != 1)
    throw std::invalid_argument("tile_rows: expected [1,D]");
  return repeat_rows(x, m);
}

// Select rows of [N, D] by index; rows may repeat. Backward scatter-adds.
inline VarPtr gather_rows(const VarPtr& x, std::vector<std::int64_t> idx) {
  if (x->val.rank() != 2) throw std::invalid_argument("gather_rows: expected [N,D]");
  const std::int64_t N = x->val.dim(0), D = x->val.dim(1);
  for (std::int64_t i : idx)
    if (i < 0 || i >= N) throw std::invalid_argument("gather_rows: index out of range");
  const std::int64_t K = static_cast<std::int64_t>(idx.size());
  Tensor out = Tensor::zeros({K, D});
  for (std::int64_t k = 0; k < K; ++k)
    for (std::int64_t d = 0; d < D; ++d) out.at(k * D + d) = x->val.at(idx[static_cast<std::size_t>(k)] * D + d);
  auto ids = std::make_shared<std::vector<std::int64_t>>(std::move(idx));
  return make_op(std::move(out), {x}, [K, D, ids](Var& self) {
    Var& x = *self.parents[0];
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t d = 0; d < D; ++d)
        g.at((*ids)[static_cast<std::size_t>(k)] * D + d) += self.grad.at(k * D + d);
  });
}

// ---- shared point MLP ---------------------------------------------------------

struct DenseLayer {
  VarPtr w, b;
  bool activation = true;  // rectifier after the affine map
};

inline VarPtr dense_stack(VarPtr x, const std::vector<DenseLayer>& layers) {
  if (layers.empty()) throw std::invalid_argument("dense_stack: empty layer spec");
  for (const DenseLayer& l : layers) {
    x = dense(x, l.w, l.b);
    if (l.activation) x = relu(x);
  }
  return x;
}

// Applies the same dense+activation stack to every point independently:
// [B, N, Din] -> [B, N, Dout].
inline VarPtr shared_mlp(const VarPtr& points, const std::vector<DenseLayer>& layers) {
  if (points->val.rank() != 3) throw std::invalid_argument("shared_mlp: expected [B,N,D]");
  if (layers.empty()) throw std::invalid_argument("shared_mlp: empty layer spec");
  const std::int64_t B = points->val.dim(0), N = points->val.dim(1);
  VarPtr flat = reshape(points, {B * N, points->val.dim(2)});
  flat = dense_stack(flat, layers);
  return reshape(flat, {B, N, flat->val.dim(1)});
}

// ---- concat / slice ---------------------------------------------------------

inline VarPtr concat(const std::vector<VarPtr>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = xs[0]->val.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: axis out of range");
  std::vector<std::int64_t> shape = xs[0]->val.shape;
  std::int64_t axis_total = 0;
  for (const VarPtr& x : xs) {
    if (x->val.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && x->val.dim(d) != shape[static_cast<std::size_t>(d)])
        throw std::invalid_argument("concat: non-axis dimension mismatch");
    axis_total += x->val.dim(axis);
  }
  shape[static_cast<std::size_t>(axis)] = axis_total;

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[static_cast<std::size_t>(d)];

  Tensor out = Tensor::zeros(shape);
  {
    std::int64_t offset = 0;
    for (const VarPtr& x : xs) {
      const std::int64_t ax = x->val.dim(axis);
      for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = x->val.v.data() + o * ax * inner;
        double* dst = out.v.data() + (o * axis_total + offset) * inner;
        for (std::int64_t i = 0; i < ax * inner; ++i) dst[i] = src[i];
      }
      offset += ax;
    }
  }
  std::vector<std::int64_t> axes;
  for (const VarPtr& x : xs) axes.push_back(x->val.dim(axis));
  return make_op(std::move(out), xs, [outer, inner, axis_total, axes](Var& self) {
    std::int64_t offset = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      Var& p = *self.parents[pi];
      const std::int64_t ax = axes[pi];
      if (p.requires_grad) {
        Tensor& g = p.ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
          const double* src = self.grad.v.data() + (o * axis_total + offset) * inner;
          double* dst = g.v.data() + o * ax * inner;
          for (std::int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
      offset += ax;
    }
  });
}

inline VarPtr slice(const VarPtr& x, int axis, std::int64_t start, std::int64_t len) {
  const int rank = x->val.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("slice: axis out of range");
  const std::int64_t ax = x->val.dim(axis);
  if (start < 0 || len < 1 || start + len > ax) throw std::invalid_argument("slice: range out of bounds");
  std::vector<std::int64_t> shape = x->val.shape;
  shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[static_cast<std::size_t>(d)];
  Tensor out = Tensor::zeros(shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = x->val.v.data() + (o * ax + start) * inner;
    double* dst = out.v.data() + o * len * inner;
    for (std::int64_t i = 0; i < len * inner; ++i) dst[i] = src[i];
  }
  return make_op(std::move(out), {x}, [outer, inner, ax, start, len](Var& self) {
    Var& x = *self.parents[0];
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = self.grad.v.data() + o * len * inner;
      double* dst = g.v.data() + (o * ax + start) * inner;
      for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

// ---- backward ---------------------------------------------------------------

// Populates grad of every requires_grad tensor reachable from the scalar loss.
inline void backward(const VarPtr& loss) {
  if (loss->val.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  std::vector<Var*> order;
  std::unordered_set<Var*> seen;
  std::vector<Var*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Var* v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (const VarPtr& p : v->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](const Var* a, const Var* b) { return a->seq > b->seq; });
  loss->ensure_grad().v[0] += 1.0;
  for (Var* v : order) {
    if (!v->requires_grad || !v->backprop || !v->has_grad()) continue;
    v->backprop(*v);
  }
}

}  // namespace asfm::ad
