// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/autodiff.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace floss::ad {

namespace {

void check_shape(bool ok, const std::string& what, const std::vector<int64_t>& a,
                 const std::vector<int64_t>& b) {
  if (!ok)
    throw std::invalid_argument(what + ": incompatible shapes " + shape_str(a) +
                                " vs " + shape_str(b));
}

Var make_node(Tensor val, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

void ensure_grad(Node& n) {
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
}

// Right-aligned broadcast strides for b against shape a; 0 on size-1 axes.
std::vector<int64_t> bcast_strides(const std::vector<int64_t>& a,
                                   const std::vector<int64_t>& b) {
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());
  check_shape(nb <= na, "broadcast", a, b);
  std::vector<int64_t> stride(static_cast<size_t>(na), 0);
  int64_t s = 1;
  for (int i = nb - 1; i >= 0; --i) {
    const int ai = na - nb + i;
    check_shape(b[static_cast<size_t>(i)] == a[static_cast<size_t>(ai)] ||
                    b[static_cast<size_t>(i)] == 1,
                "broadcast", a, b);
    stride[static_cast<size_t>(ai)] = (b[static_cast<size_t>(i)] == 1) ? 0 : s;
    s *= b[static_cast<size_t>(i)];
  }
  return stride;
}

// Iterates over the index space of `shape`, calling fn(flat_a, flat_b) where
// flat_b follows the broadcast strides.
template <typename Fn>
void bcast_foreach(const std::vector<int64_t>& shape,
                   const std::vector<int64_t>& bstride, Fn&& fn) {
  const int nd = static_cast<int>(shape.size());
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t ia = 0, ib = 0;
  const int64_t total = Tensor::numel_of(shape);
  for (int64_t c = 0; c < total; ++c) {
    fn(ia, ib);
    ++ia;
    for (int d = nd - 1; d >= 0; --d) {
      ib += bstride[static_cast<size_t>(d)];
      if (++idx[static_cast<size_t>(d)] < shape[static_cast<size_t>(d)]) break;
      ib -= bstride[static_cast<size_t>(d)] * shape[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Var binary(const Var& a, const Var& b, BinOp op) {
  Tensor out(a->val.shape);
  const bool same = a->val.shape == b->val.shape;
  if (same) {
    const double* pa = a->val.v.data();
    const double* pb = b->val.v.data();
    double* po = out.v.data();
    const int64_t n = out.numel();
    switch (op) {
      case BinOp::Add:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        break;
      case BinOp::Sub:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        break;
      case BinOp::Mul:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        break;
    }
  } else {
    const auto bs = bcast_strides(a->val.shape, b->val.shape);
    const double* pa = a->val.v.data();
    const double* pb = b->val.v.data();
    double* po = out.v.data();
    switch (op) {
      case BinOp::Add:
        bcast_foreach(a->val.shape, bs,
                      [&](int64_t ia, int64_t ib) { po[ia] = pa[ia] + pb[ib]; });
        break;
      case BinOp::Sub:
        bcast_foreach(a->val.shape, bs,
                      [&](int64_t ia, int64_t ib) { po[ia] = pa[ia] - pb[ib]; });
        break;
      case BinOp::Mul:
        bcast_foreach(a->val.shape, bs,
                      [&](int64_t ia, int64_t ib) { po[ia] = pa[ia] * pb[ib]; });
        break;
    }
  }
  auto n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [op, same](Node& self) {
      Var a = self.parents[0], b = self.parents[1];
      const double* g = self.grad.v.data();
      const int64_t total = self.val.numel();
      if (a->requires_grad) {
        ensure_grad(*a);
        double* ga = a->grad.v.data();
        if (op == BinOp::Mul) {
          if (same) {
            const double* pb = b->val.v.data();
            for (int64_t i = 0; i < total; ++i) ga[i] += g[i] * pb[i];
          } else {
            const auto bs = bcast_strides(a->val.shape, b->val.shape);
            const double* pb = b->val.v.data();
            bcast_foreach(a->val.shape, bs, [&](int64_t ia, int64_t ib) {
              ga[ia] += g[ia] * pb[ib];
            });
          }
        } else {
          for (int64_t i = 0; i < total; ++i) ga[i] += g[i];
        }
      }
      if (b->requires_grad) {
        ensure_grad(*b);
        double* gb = b->grad.v.data();
        const double sgn = (op == BinOp::Sub) ? -1.0 : 1.0;
        if (same) {
          if (op == BinOp::Mul) {
            const double* pa = a->val.v.data();
            for (int64_t i = 0; i < total; ++i) gb[i] += g[i] * pa[i];
          } else {
            for (int64_t i = 0; i < total; ++i) gb[i] += sgn * g[i];
          }
        } else {
          const auto bs = bcast_strides(a->val.shape, b->val.shape);
          if (op == BinOp::Mul) {
            const double* pa = a->val.v.data();
            bcast_foreach(a->val.shape, bs, [&](int64_t ia, int64_t ib) {
              gb[ib] += g[ia] * pa[ia];
            });
          } else {
            bcast_foreach(a->val.shape, bs, [&](int64_t ia, int64_t ib) {
              gb[ib] += sgn * g[ia];
            });
          }
        }
      }
    };
  }
  return n;
}

void dgemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha,
           const double* a, int64_t lda, const double* b, int64_t ldb,
           double beta, double* c, int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace

Var constant(Tensor t) { return leaf(std::move(t), false); }

Var leaf(Tensor t, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

void backward(const Var& root) {
  if (root->val.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;
  // Iterative DFS postorder over parent edges; reverse gives an order where
  // every consumer is processed before its producers.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, i] = stack.back();
    if (i < node->parents.size()) {
      Node* p = node->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  ensure_grad(*root);
  root->grad.v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.v.empty()) n->backprop(*n);
  }
}

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::Add); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::Sub); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::Mul); }

Var scale(const Var& a, double s) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.v[i] = s * a->val.v[i];
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [s](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i)
        a->grad.v[i] += s * self.grad.v[i];
    };
  return n;
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] + s;
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i)
        a->grad.v[i] += self.grad.v[i];
    };
  return n;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var powc(const Var& a, double p) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.v[i] = std::pow(a->val.v[i], p);
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [p](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i)
        a->grad.v[i] +=
            self.grad.v[i] * p * std::pow(a->val.v[i], p - 1.0);
    };
  return n;
}

Var log_clamped(const Var& a, double floor) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out.v[i] = std::log(std::max(a->val.v[i], floor));
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [floor](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i)
        if (a->val.v[i] > floor)
          a->grad.v[i] += self.grad.v[i] / a->val.v[i];
    };
  return n;
}

Var sigmoid(const Var& a) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out.v[i] = 1.0 / (1.0 + std::exp(-a->val.v[i]));
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i) {
        const double y = self.val.v[i];
        a->grad.v[i] += self.grad.v[i] * y * (1.0 - y);
      }
    };
  return n;
}

Var swish(const Var& a) {
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double x = a->val.v[i];
    out.v[i] = x / (1.0 + std::exp(-x));
  }
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i) {
        const double x = a->val.v[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        a->grad.v[i] += self.grad.v[i] * (s + x * s * (1.0 - s));
      }
    };
  return n;
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  check_shape(Tensor::numel_of(shape) == a->val.numel(), "reshape",
              a->val.shape, shape);
  Tensor out;
  out.shape = std::move(shape);
  out.v = a->val.v;
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t i = 0; i < self.val.numel(); ++i)
        a->grad.v[i] += self.grad.v[i];
    };
  return n;
}

namespace {
std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> st(shape.size());
  int64_t s = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = s;
    s *= shape[static_cast<size_t>(i)];
  }
  return st;
}

template <typename Fn>
void permuted_foreach(const std::vector<int64_t>& out_shape,
                      const std::vector<int64_t>& in_stride_perm, Fn&& fn) {
  const int nd = static_cast<int>(out_shape.size());
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t iin = 0;
  const int64_t total = Tensor::numel_of(out_shape);
  for (int64_t io = 0; io < total; ++io) {
    fn(io, iin);
    for (int d = nd - 1; d >= 0; --d) {
      iin += in_stride_perm[static_cast<size_t>(d)];
      if (++idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)])
        break;
      iin -= in_stride_perm[static_cast<size_t>(d)] *
             out_shape[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}
}  // namespace

Var transpose(const Var& a, std::vector<int> perm) {
  const int nd = a->val.ndim();
  if (static_cast<int>(perm.size()) != nd)
    throw std::invalid_argument("transpose: perm size mismatch");
  std::vector<int64_t> out_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i)
    out_shape[static_cast<size_t>(i)] = a->val.dim(perm[static_cast<size_t>(i)]);
  const auto in_st = strides_of(a->val.shape);
  std::vector<int64_t> st(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i)
    st[static_cast<size_t>(i)] = in_st[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  Tensor out(out_shape);
  permuted_foreach(out_shape, st, [&](int64_t io, int64_t ii) {
    out.v[io] = a->val.v[ii];
  });
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [out_shape, st](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      permuted_foreach(out_shape, st, [&](int64_t io, int64_t ii) {
        a->grad.v[ii] += self.grad.v[io];
      });
    };
  return n;
}

Var slice(const Var& a, int axis, int64_t start, int64_t len) {
  const auto& sh = a->val.shape;
  if (axis < 0 || axis >= a->val.ndim() || start < 0 ||
      start + len > sh[static_cast<size_t>(axis)] || len <= 0)
    throw std::invalid_argument("slice: out of range on axis " +
                                std::to_string(axis) + " of " + shape_str(sh));
  auto out_shape = sh;
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a->val.ndim(); ++i) inner *= sh[static_cast<size_t>(i)];
  const int64_t da = sh[static_cast<size_t>(axis)];
  Tensor out(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.v.data() + o * len * inner,
                a->val.v.data() + (o * da + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(double));
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [outer, inner, da, start, len](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t o = 0; o < outer; ++o) {
        double* ga = a->grad.v.data() + (o * da + start) * inner;
        const double* g = self.grad.v.data() + o * len * inner;
        for (int64_t i = 0; i < len * inner; ++i) ga[i] += g[i];
      }
    };
  return n;
}

Var concat(int axis, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty list");
  auto out_shape = parts[0]->val.shape;
  int64_t total_axis = 0;
  for (const auto& p : parts) {
    auto sh = p->val.shape;
    check_shape(sh.size() == out_shape.size(), "concat", out_shape, sh);
    for (int i = 0; i < static_cast<int>(sh.size()); ++i)
      if (i != axis)
        check_shape(sh[static_cast<size_t>(i)] == out_shape[static_cast<size_t>(i)],
                    "concat", out_shape, sh);
    total_axis += sh[static_cast<size_t>(axis)];
  }
  out_shape[static_cast<size_t>(axis)] = total_axis;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < static_cast<int>(out_shape.size()); ++i)
    inner *= out_shape[static_cast<size_t>(i)];
  Tensor out(out_shape);
  int64_t off = 0;
  std::vector<int64_t> lens;
  for (const auto& p : parts) {
    const int64_t len = p->val.shape[static_cast<size_t>(axis)];
    lens.push_back(len);
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.v.data() + (o * total_axis + off) * inner,
                  p->val.v.data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(double));
    off += len;
  }
  auto n = make_node(std::move(out), parts);
  if (n->requires_grad)
    n->backprop = [outer, inner, total_axis, lens](Node& self) {
      int64_t off = 0;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        Var p = self.parents[k];
        const int64_t len = lens[k];
        if (p->requires_grad) {
          ensure_grad(*p);
          for (int64_t o = 0; o < outer; ++o) {
            const double* g = self.grad.v.data() + (o * total_axis + off) * inner;
            double* gp = p->grad.v.data() + o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) gp[i] += g[i];
          }
        }
        off += len;
      }
    };
  return n;
}

Var pad_last(const Var& a, int64_t left, int64_t right) {
  auto out_shape = a->val.shape;
  const int64_t L = out_shape.back();
  out_shape.back() = L + left + right;
  const int64_t rows = a->val.numel() / L;
  Tensor out(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.v.data() + r * (L + left + right) + left,
                a->val.v.data() + r * L, static_cast<size_t>(L) * sizeof(double));
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [L, left, right, rows](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t r = 0; r < rows; ++r) {
        const double* g = self.grad.v.data() + r * (L + left + right) + left;
        double* ga = a->grad.v.data() + r * L;
        for (int64_t i = 0; i < L; ++i) ga[i] += g[i];
      }
    };
  return n;
}

Var sum_all(const Var& a) {
  Tensor out({1});
  double s = 0.0;
  for (double x : a->val.v) s += x;
  out.v[0] = s;
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      const double g = self.grad.v[0];
      for (auto& x : a->grad.v) x += g;
    };
  return n;
}

Var sum_axis(const Var& a, int axis) {
  const auto& sh = a->val.shape;
  if (axis < 0 || axis >= a->val.ndim())
    throw std::invalid_argument("sum_axis: bad axis");
  auto out_shape = sh;
  const int64_t da = sh[static_cast<size_t>(axis)];
  out_shape[static_cast<size_t>(axis)] = 1;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a->val.ndim(); ++i) inner *= sh[static_cast<size_t>(i)];
  Tensor out(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t d = 0; d < da; ++d) {
      const double* pa = a->val.v.data() + (o * da + d) * inner;
      double* po = out.v.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) po[i] += pa[i];
    }
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [outer, inner, da](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t d = 0; d < da; ++d) {
          double* ga = a->grad.v.data() + (o * da + d) * inner;
          const double* g = self.grad.v.data() + o * inner;
          for (int64_t i = 0; i < inner; ++i) ga[i] += g[i];
        }
    };
  return n;
}

Var mean_axis(const Var& a, int axis) {
  const double inv = 1.0 / static_cast<double>(a->val.dim(axis));
  return scale(sum_axis(a, axis), inv);
}

Var softmax_last(const Var& a) {
  const int64_t d = a->val.shape.back();
  const int64_t rows = a->val.numel() / d;
  Tensor out(a->val.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = a->val.v.data() + r * d;
    double* y = out.v.data() + r * d;
    double mx = x[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    const double inv = 1.0 / s;
    for (int64_t i = 0; i < d; ++i) y[i] *= inv;
  }
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backprop = [d, rows](Node& self) {
      Var a = self.parents[0];
      ensure_grad(*a);
      for (int64_t r = 0; r < rows; ++r) {
        const double* y = self.val.v.data() + r * d;
        const double* g = self.grad.v.data() + r * d;
        double* ga = a->grad.v.data() + r * d;
        double dot = 0.0;
        for (int64_t i = 0; i < d; ++i) dot += y[i] * g[i];
        for (int64_t i = 0; i < d; ++i) ga[i] += y[i] * (g[i] - dot);
      }
    };
  return n;
}

Var matmul(const Var& a, const Var& w) {
  const auto& sa = a->val.shape;
  const auto& sw = w->val.shape;
  check_shape(sw.size() == 2 && sa.size() >= 1 && sa.back() == sw[0], "matmul",
              sa, sw);
  const int64_t k = sw[0], nn = sw[1];
  const int64_t m = a->val.numel() / k;
  auto out_shape = sa;
  out_shape.back() = nn;
  Tensor out(out_shape);
  dgemm(false, false, m, nn, k, 1.0, a->val.v.data(), k, w->val.v.data(), nn,
        0.0, out.v.data(), nn);
  auto n = make_node(std::move(out), {a, w});
  if (n->requires_grad)
    n->backprop = [m, nn, k](Node& self) {
      Var a = self.parents[0], w = self.parents[1];
      if (a->requires_grad) {
        ensure_grad(*a);
        dgemm(false, true, m, k, nn, 1.0, self.grad.v.data(), nn,
              w->val.v.data(), nn, 1.0, a->grad.v.data(), k);
      }
      if (w->requires_grad) {
        ensure_grad(*w);
        dgemm(true, false, k, nn, m, 1.0, a->val.v.data(), k,
              self.grad.v.data(), nn, 1.0, w->grad.v.data(), nn);
      }
    };
  return n;
}

Var bmm(const Var& a, const Var& b) {
  const auto& sa = a->val.shape;
  const auto& sb = b->val.shape;
  check_shape(sa.size() == sb.size() && sa.size() >= 2, "bmm", sa, sb);
  for (size_t i = 0; i + 2 < sa.size(); ++i)
    check_shape(sa[i] == sb[i], "bmm", sa, sb);
  const int64_t m = sa[sa.size() - 2], k = sa.back();
  check_shape(sb[sb.size() - 2] == k, "bmm", sa, sb);
  const int64_t nn = sb.back();
  const int64_t batch = a->val.numel() / (m * k);
  auto out_shape = sa;
  out_shape[out_shape.size() - 1] = nn;
  Tensor out(out_shape);
  for (int64_t q = 0; q < batch; ++q)
    dgemm(false, false, m, nn, k, 1.0, a->val.v.data() + q * m * k, k,
          b->val.v.data() + q * k * nn, nn, 0.0, out.v.data() + q * m * nn, nn);
  auto n = make_node(std::move(out), {a, b});
  if (n->requires_grad)
    n->backprop = [batch, m, nn, k](Node& self) {
      Var a = self.parents[0], b = self.parents[1];
      if (a->requires_grad) {
        ensure_grad(*a);
        for (int64_t q = 0; q < batch; ++q)
          dgemm(false, true, m, k, nn, 1.0, self.grad.v.data() + q * m * nn, nn,
                b->val.v.data() + q * k * nn, nn, 1.0,
                a->grad.v.data() + q * m * k, k);
      }
      if (b->requires_grad) {
        ensure_grad(*b);
        for (int64_t q = 0; q < batch; ++q)
          dgemm(true, false, k, nn, m, 1.0, a->val.v.data() + q * m * k, k,
                self.grad.v.data() + q * m * nn, nn, 1.0,
                b->grad.v.data() + q * k * nn, nn);
      }
    };
  return n;
}

namespace {

// Shared im2col-based convolution. Spatial axes are the leading ones.
struct ConvPlan {
  int64_t sp0 = 1, sp1 = 1;  // spatial extents (sp1 == 1 for 1-D)
  int64_t rbatch = 1;        // non-spatial batch between spatial axes and Cin
  int64_t cin = 1, cout = 1;
  int64_t kh = 1, kw = 1;
};

std::vector<double> im2col(const ConvPlan& p, const double* x) {
  const int64_t rows = p.sp0 * p.sp1 * p.rbatch;
  const int64_t cols = p.cin * p.kh * p.kw;
  std::vector<double> col(static_cast<size_t>(rows * cols), 0.0);
  const int64_t ph = p.kh / 2, pw = p.kw / 2;
  for (int64_t i = 0; i < p.sp0; ++i)
    for (int64_t j = 0; j < p.sp1; ++j)
      for (int64_t r = 0; r < p.rbatch; ++r) {
        double* dst = col.data() +
                      (((i * p.sp1 + j) * p.rbatch + r) * p.cin) * p.kh * p.kw;
        for (int64_t c = 0; c < p.cin; ++c)
          for (int64_t a = 0; a < p.kh; ++a) {
            const int64_t ii = i + a - ph;
            if (ii < 0 || ii >= p.sp0) continue;
            for (int64_t b = 0; b < p.kw; ++b) {
              const int64_t jj = j + b - pw;
              if (jj < 0 || jj >= p.sp1) continue;
              dst[(c * p.kh + a) * p.kw + b] =
                  x[((ii * p.sp1 + jj) * p.rbatch + r) * p.cin + c];
            }
          }
      }
  return col;
}

void col2im_add(const ConvPlan& p, const double* col, double* gx) {
  const int64_t ph = p.kh / 2, pw = p.kw / 2;
  for (int64_t i = 0; i < p.sp0; ++i)
    for (int64_t j = 0; j < p.sp1; ++j)
      for (int64_t r = 0; r < p.rbatch; ++r) {
        const double* src = col +
                            (((i * p.sp1 + j) * p.rbatch + r) * p.cin) * p.kh * p.kw;
        for (int64_t c = 0; c < p.cin; ++c)
          for (int64_t a = 0; a < p.kh; ++a) {
            const int64_t ii = i + a - ph;
            if (ii < 0 || ii >= p.sp0) continue;
            for (int64_t b = 0; b < p.kw; ++b) {
              const int64_t jj = j + b - pw;
              if (jj < 0 || jj >= p.sp1) continue;
              gx[((ii * p.sp1 + jj) * p.rbatch + r) * p.cin + c] +=
                  src[(c * p.kh + a) * p.kw + b];
            }
          }
      }
}

Var conv_impl(const Var& x, const Var& w, const ConvPlan& plan,
              std::vector<int64_t> out_shape) {
  const int64_t rows = plan.sp0 * plan.sp1 * plan.rbatch;
  const int64_t cols = plan.cin * plan.kh * plan.kw;
  auto col = std::make_shared<std::vector<double>>(im2col(plan, x->val.v.data()));
  Tensor out(std::move(out_shape));
  // y[rows, cout] = col[rows, cols] * w[cout, cols]^T
  dgemm(false, true, rows, plan.cout, cols, 1.0, col->data(), cols,
        w->val.v.data(), cols, 0.0, out.v.data(), plan.cout);
  auto n = make_node(std::move(out), {x, w});
  if (n->requires_grad) {
    ConvPlan p = plan;
    n->backprop = [p, rows, cols, col](Node& self) {
      Var x = self.parents[0], w = self.parents[1];
      if (w->requires_grad) {
        ensure_grad(*w);
        dgemm(true, false, p.cout, cols, rows, 1.0, self.grad.v.data(), p.cout,
              col->data(), cols, 1.0, w->grad.v.data(), cols);
      }
      if (x->requires_grad) {
        ensure_grad(*x);
        std::vector<double> dcol(static_cast<size_t>(rows * cols));
        dgemm(false, false, rows, cols, p.cout, 1.0, self.grad.v.data(),
              p.cout, w->val.v.data(), cols, 0.0, dcol.data(), cols);
        col2im_add(p, dcol.data(), x->grad.v.data());
      }
    };
  } else {
    col.reset();
  }
  return n;
}

}  // namespace

Var conv1d_front(const Var& x, const Var& w) {
  const auto& sx = x->val.shape;
  const auto& sw = w->val.shape;
  check_shape(sx.size() == 3 && sw.size() == 3 && sx[2] == sw[1] &&
                  sw[2] % 2 == 1,
              "conv1d", sx, sw);
  ConvPlan p;
  p.sp0 = sx[0];
  p.rbatch = sx[1];
  p.cin = sx[2];
  p.cout = sw[0];
  p.kh = sw[2];
  return conv_impl(x, w, p, {sx[0], sx[1], sw[0]});
}

Var conv2d_front(const Var& x, const Var& w) {
  const auto& sx = x->val.shape;
  const auto& sw = w->val.shape;
  check_shape(sx.size() == 4 && sw.size() == 4 && sx[3] == sw[1] &&
                  sw[2] % 2 == 1 && sw[3] % 2 == 1,
              "conv2d", sx, sw);
  ConvPlan p;
  p.sp0 = sx[0];
  p.sp1 = sx[1];
  p.rbatch = sx[2];
  p.cin = sx[3];
  p.cout = sw[0];
  p.kh = sw[2];
  p.kw = sw[3];
  return conv_impl(x, w, p, {sx[0], sx[1], sx[2], sw[0]});
}

Var frame_signal(const Var& x, int64_t frame, int64_t hop) {
  const auto& sh = x->val.shape;
  const int64_t L = sh.back();
  if (L < frame || (L - frame) % hop != 0)
    throw std::invalid_argument("frame_signal: length " + std::to_string(L) +
                                " does not frame evenly");
  const int64_t T = (L - frame) / hop + 1;
  const int64_t rows = x->val.numel() / L;
  auto out_shape = sh;
  out_shape.back() = T;
  out_shape.push_back(frame);
  Tensor out(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t t = 0; t < T; ++t)
      std::memcpy(out.v.data() + (r * T + t) * frame,
                  x->val.v.data() + r * L + t * hop,
                  static_cast<size_t>(frame) * sizeof(double));
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backprop = [rows, T, frame, hop, L](Node& self) {
      Var x = self.parents[0];
      ensure_grad(*x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t t = 0; t < T; ++t) {
          const double* g = self.grad.v.data() + (r * T + t) * frame;
          double* gx = x->grad.v.data() + r * L + t * hop;
          for (int64_t i = 0; i < frame; ++i) gx[i] += g[i];
        }
    };
  return n;
}

Var overlap_add(const Var& x, int64_t hop) {
  const auto& sh = x->val.shape;
  if (sh.size() < 2) throw std::invalid_argument("overlap_add: need >= 2 axes");
  const int64_t frame = sh.back();
  const int64_t T = sh[sh.size() - 2];
  const int64_t L = (T - 1) * hop + frame;
  const int64_t rows = x->val.numel() / (T * frame);
  auto out_shape = std::vector<int64_t>(sh.begin(), sh.end() - 2);
  out_shape.push_back(L);
  Tensor out(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t t = 0; t < T; ++t) {
      const double* src = x->val.v.data() + (r * T + t) * frame;
      double* dst = out.v.data() + r * L + t * hop;
      for (int64_t i = 0; i < frame; ++i) dst[i] += src[i];
    }
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backprop = [rows, T, frame, hop, L](Node& self) {
      Var x = self.parents[0];
      ensure_grad(*x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t t = 0; t < T; ++t) {
          double* gx = x->grad.v.data() + (r * T + t) * frame;
          const double* g = self.grad.v.data() + r * L + t * hop;
          for (int64_t i = 0; i < frame; ++i) gx[i] += g[i];
        }
    };
  return n;
}

Var mag_compress(const Var& x, double p) {
  const auto& sh = x->val.shape;
  if (sh.empty() || sh.back() != 2)
    throw std::invalid_argument("mag_compress: last axis must be 2, got " +
                                shape_str(sh));
  const int64_t pairs = x->val.numel() / 2;
  Tensor out(sh);
  for (int64_t i = 0; i < pairs; ++i) {
    const double re = x->val.v[2 * i], im = x->val.v[2 * i + 1];
    const double m2 = re * re + im * im;
    if (m2 == 0.0) continue;
    const double s = std::pow(m2, 0.5 * (p - 1.0));
    out.v[2 * i] = s * re;
    out.v[2 * i + 1] = s * im;
  }
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backprop = [p, pairs](Node& self) {
      Var x = self.parents[0];
      ensure_grad(*x);
      for (int64_t i = 0; i < pairs; ++i) {
        const double re = x->val.v[2 * i], im = x->val.v[2 * i + 1];
        // Magnitude floor keeps the p < 1 branch finite near zero.
        const double m2 = std::max(re * re + im * im, 1e-24);
        const double s = std::pow(m2, 0.5 * (p - 1.0));
        const double q = (p - 1.0) * std::pow(m2, 0.5 * (p - 3.0));
        const double gre = self.grad.v[2 * i], gim = self.grad.v[2 * i + 1];
        const double proj = re * gre + im * gim;
        x->grad.v[2 * i] += s * gre + q * proj * re;
        x->grad.v[2 * i + 1] += s * gim + q * proj * im;
      }
    };
  return n;
}

double grad_check(const std::function<Var(const Var&)>& f, Tensor x, double h) {
  Var xv = leaf(x, true);
  Var y = f(xv);
  backward(y);
  Tensor analytic = xv->grad;
  double max_rel = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp.v[i] += h;
    xm.v[i] -= h;
    const double fp = f(leaf(xp, false))->val.v[0];
    const double fm = f(leaf(xm, false))->val.v[0];
    const double num = (fp - fm) / (2.0 * h);
    const double ana = analytic.v.empty() ? 0.0 : analytic.v[i];
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
    max_rel = std::max(max_rel, std::abs(num - ana) / denom);
  }
  return max_rel;
}

}  // namespace floss::ad
