// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dynamic reverse-mode tape over a closed set of primitives. Every operator
// in the library is written against `Var`; the Tensor-level entry points
// run them on a throwaway tape of constants.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "mvdiff/tensor.hpp"

namespace mvd {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Flat source offsets for gather; -1 yields 0 in the output.
using IndexList = std::vector<std::int64_t>;
using IndexPtr = std::shared_ptr<const IndexList>;
using MaskPtr = std::shared_ptr<const std::vector<unsigned char>>;

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is tracked.
    Var variable(Tensor value);
    // Leaf without gradient.
    Var constant(Tensor value);

    // Registers the output of a primitive. `fn` is dropped when no input
    // requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

    // Seeds d(out)/d(out) = 1 and runs every recorded backward function in
    // reverse order. Gradients from earlier calls are cleared first, so two
    // calls give bitwise identical results.
    void backward(Var out);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    // Gradient of the last backward() with respect to v (zeros if v was not
    // reached).
    Tensor grad(Var v) const;

    // Zero-initialised accumulation buffer, for use inside backward functions.
    Tensor& grad_buffer(Var v);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);  // [..., k] x [k, n]
Var bmm(Var a, Var b);     // [B,m,k] x [B,k,n]
Var bmm_nt(Var a, Var b);  // [B,m,k] x [B,n,k]^T

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
// x[..., n] + b[n]
Var add_bias(Var x, Var b);

Var exp(Var x);
Var sigmoid(Var x);
Var silu(Var x);
Var softplus(Var x);
Var square(Var x);

Var sum(Var x);   // -> [1]
Var mean(Var x);  // -> [1]
Var mse(Var a, Var b);

// Softmax over the last axis. With a mask, masked entries get exactly 0.
Var softmax(Var x, MaskPtr mask = nullptr);

// (x - mean) / sqrt(var + eps) over the last axis, no affine terms.
Var layer_norm(Var x, double eps = 1e-5);

Var avg_pool2d(Var x, std::size_t stride);
Var bilinear_upsample2d(Var x, std::size_t factor);

// out[i] = x.flat[index[i]] (0 where index[i] < 0). Backward scatter-adds.
Var gather(Var x, IndexPtr index, Shape out_shape);
Var reshape(Var x, Shape shape);
// Concatenate along the last axis; leading axes must agree.
Var concat_last(Var a, Var b);

}  // namespace ag

// ---------------------------------------------------------------------------
// Central-difference gradient checker.

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
    Tensor analytic;
    Tensor numeric;
};

using ScalarFn = std::function<Var(Tape&, Var)>;

// Per-entry relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckReport grad_check(const ScalarFn& f, const Tensor& params, double eps = 1e-5, double tol = 1e-4);

}  // namespace mvd
