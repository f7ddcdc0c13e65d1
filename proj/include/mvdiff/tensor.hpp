// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor and the numeric kernels the rest of the library is
// built on. Values are stored as double; the .mvt format can persist them at
// 32- or 64-bit precision.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mvd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // Multi-index access, bounds-checked.
    double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

namespace kernels {

// Raw accumulate-into GEMMs on row-major buffers: c += op(a) * op(b).
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace kernels

// ---------------------------------------------------------------------------
// Kernels. Every kernel uses a fixed accumulation order, so results are
// bitwise reproducible.

// a[..., k] x b[k, n] -> [..., n]; leading axes of a are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched products over the leading axis: a[B,m,k] x b[B,k,n] -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b);
// a[B,m,k] x b[B,n,k]^T -> [B,m,n].
Tensor bmm_nt(const Tensor& a, const Tensor& b);
// a[B,k,m]^T x b[B,k,n] -> [B,m,n].
Tensor bmm_tn(const Tensor& a, const Tensor& b);

// Numerically stable softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis);

// Softmax over the last axis; entries with mask == 0 get probability 0.
// Every row must keep at least one unmasked entry.
Tensor masked_softmax(const Tensor& x, std::span<const unsigned char> mask);

// Mean over non-overlapping stride x stride windows of the last two axes.
Tensor avg_pool2d(const Tensor& x, std::size_t stride);
Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t stride);

// Bilinear upsampling of the last two axes by an integer factor, half-pixel
// centres (align_corners = false) with edge clamping.
Tensor bilinear_upsample2d(const Tensor& x, std::size_t factor);
Tensor bilinear_upsample2d_backward(const Tensor& grad_out, const Shape& input_shape,
                                    std::size_t factor);

}  // namespace mvd
