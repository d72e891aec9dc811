// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense tensors.
// A computation builds a DAG of Nodes; backward() walks it once in
// reverse topological order. All reductions use a fixed iteration
// order, so results are reproducible run to run on one machine.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "floss/tensor.hpp"

namespace floss::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily by backward()
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // pushes grad into parents
  std::string name;                     // nonempty for parameters

  const std::vector<int64_t>& shape() const { return val.shape; }
};

Var constant(Tensor t);
Var leaf(Tensor t, bool requires_grad, std::string name = "");

// Seeds root->grad with ones (root must be scalar) and accumulates
// gradients into every reachable node with requires_grad.
void backward(const Var& root);

// ----- elementwise -----
// Binary ops broadcast the second operand: b's shape is right-aligned
// against a's and every b axis must equal a's or be 1. No other
// broadcasting is supported.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var powc(const Var& a, double p);  // elementwise a^p, a > 0
Var log_clamped(const Var& a, double floor);  // ln(max(a, floor)); zero grad when clamped
Var sigmoid(const Var& a);
Var swish(const Var& a);

// ----- shape -----
Var reshape(const Var& a, std::vector<int64_t> shape);
Var transpose(const Var& a, std::vector<int> perm);
Var slice(const Var& a, int axis, int64_t start, int64_t len);
Var concat(int axis, const std::vector<Var>& parts);
Var pad_last(const Var& a, int64_t left, int64_t right);

// ----- reductions / normalization -----
Var sum_all(const Var& a);                          // -> shape [1]
Var sum_axis(const Var& a, int axis);               // keeps the axis as size 1
Var mean_axis(const Var& a, int axis);              // keeps the axis as size 1
Var softmax_last(const Var& a);

// ----- linear algebra -----
// a: [..., m, k] x w: [k, n] -> [..., m, n]
Var matmul(const Var& a, const Var& w);
// a: [batch..., m, k] x b: [batch..., k, n], identical leading axes.
Var bmm(const Var& a, const Var& b);

// ----- convolutions (zero 'same' padding) -----
// x: [S, R, Cin] convolved along axis 0; w: [Cout, Cin, kw] -> [S, R, Cout]
Var conv1d_front(const Var& x, const Var& w);
// x: [H, W, R, Cin] convolved along axes 0,1; w: [Cout, Cin, kh, kw]
Var conv2d_front(const Var& x, const Var& w);

// ----- signal framing -----
// x: [..., L] -> [..., T, frame] with T = (L - frame)/hop + 1 (L must fit).
Var frame_signal(const Var& x, int64_t frame, int64_t hop);
// Adjoint-style inverse: x: [..., T, frame] -> [..., L], L = (T-1)*hop + frame.
Var overlap_add(const Var& x, int64_t hop);

// ----- complex magnitude compression -----
// x: [..., 2] (re, im) -> |z|^p * e^{i arg z}. p in (0, inf); 0 maps to 0.
Var mag_compress(const Var& x, double p);

// Central finite-difference check of d f / d x against the tape.
// f must return a scalar Var built from x. Returns max relative error.
double grad_check(const std::function<Var(const Var&)>& f, Tensor x,
                  double h = 1e-5);

}  // namespace floss::ad
