// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvdiff/errors.hpp"

namespace mvd {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be >= 1, got " + shape_str(shape));
    }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw DomainError("axis out of range");
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw DomainError("index out of range");
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------------------

namespace kernels {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            c[i * n + j] += acc;
        }
    }
}

}  // namespace kernels

namespace {

using kernels::gemm_nn;
using kernels::gemm_nt;
using kernels::gemm_tn;

void require_rank(const Tensor& t, std::size_t r, const char* what) {
    if (t.rank() != r) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                             shape_str(t.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(b, 2, "matmul rhs");
    const std::size_t k = a.shape().back();
    if (k != b.dim(0)) {
        throw DimensionError("matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t n = b.dim(1);
    const std::size_t m = a.size() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor out(out_shape);
    gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "bmm lhs");
    require_rank(b, 3, "bmm rhs");
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
        throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor out({batch, m, n});
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_nn(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data().data() + s * m * n, m, k, n);
    }
    return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "bmm_nt lhs");
    require_rank(b, 3, "bmm_nt rhs");
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    if (b.dim(0) != batch || b.dim(2) != k) {
        throw DimensionError("bmm_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    }
    Tensor out({batch, m, n});
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_nt(a.data().data() + s * m * k, b.data().data() + s * n * k, out.data().data() + s * m * n, m, k, n);
    }
    return out;
}

Tensor bmm_tn(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "bmm_tn lhs");
    require_rank(b, 3, "bmm_tn rhs");
    const std::size_t batch = a.dim(0), k = a.dim(1), m = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
        throw DimensionError("bmm_tn: " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
    }
    Tensor out({batch, m, n});
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_tn(a.data().data() + s * k * m, b.data().data() + s * k * n, out.data().data() + s * m * n, m, k, n);
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    const int rank = static_cast<int>(x.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw DomainError("softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x.shape()[i];
    const std::size_t len = x.shape()[axis];

    Tensor out(x.shape());
    const double* src = x.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = src[base];
            for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, src[base + i * inner]);
            double sum = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double e = std::exp(src[base + i * inner] - mx);
                dst[base + i * inner] = e;
                sum += e;
            }
            for (std::size_t i = 0; i < len; ++i) dst[base + i * inner] /= sum;
        }
    }
    return out;
}

Tensor masked_softmax(const Tensor& x, std::span<const unsigned char> mask) {
    if (mask.size() != x.size()) throw DimensionError("masked_softmax: mask size differs from input");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.size() / len;
    Tensor out(x.shape());
    const double* src = x.data().data();
    double* dst = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * len;
        bool any = false;
        double mx = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            if (!mask[base + i]) continue;
            mx = any ? std::max(mx, src[base + i]) : src[base + i];
            any = true;
        }
        if (!any) throw DomainError("masked_softmax: row with every entry masked");
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = mask[base + i] ? std::exp(src[base + i] - mx) : 0.0;
            dst[base + i] = e;
            sum += e;
        }
        for (std::size_t i = 0; i < len; ++i) dst[base + i] /= sum;
    }
    return out;
}

namespace {

struct Planes {
    std::size_t count, h, w;
};

Planes planes_of(const Shape& s, const char* what) {
    if (s.size() < 2) throw DimensionError(std::string(what) + ": needs at least 2 axes");
    const std::size_t h = s[s.size() - 2], w = s.back();
    return {numel(s) / (h * w), h, w};
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, std::size_t stride) {
    if (stride == 0) throw DomainError("avg_pool2d: stride must be >= 1");
    const auto [count, h, w] = planes_of(x.shape(), "avg_pool2d");
    if (h % stride != 0 || w % stride != 0) {
        throw DimensionError("avg_pool2d: stride " + std::to_string(stride) + " does not divide " +
                             shape_str(x.shape()));
    }
    if (stride == 1) return x;
    const std::size_t oh = h / stride, ow = w / stride;
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape.back() = ow;
    Tensor out(out_shape);
    const double inv = 1.0 / static_cast<double>(stride * stride);
    for (std::size_t p = 0; p < count; ++p) {
        const double* src = x.data().data() + p * h * w;
        double* dst = out.data().data() + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < stride; ++dy) {
                    for (std::size_t dx = 0; dx < stride; ++dx) {
                        acc += src[(oy * stride + dy) * w + ox * stride + dx];
                    }
                }
                dst[oy * ow + ox] = acc * inv;
            }
        }
    }
    return out;
}

Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t stride) {
    if (stride == 1) return grad_out.reshaped(input_shape);
    const auto [count, h, w] = planes_of(input_shape, "avg_pool2d_backward");
    const std::size_t oh = h / stride, ow = w / stride;
    Tensor grad(input_shape);
    const double inv = 1.0 / static_cast<double>(stride * stride);
    for (std::size_t p = 0; p < count; ++p) {
        const double* g = grad_out.data().data() + p * oh * ow;
        double* dst = grad.data().data() + p * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) dst[y * w + x] = g[(y / stride) * ow + x / stride] * inv;
        }
    }
    return grad;
}

namespace {

// Source taps for one output coordinate under the half-pixel convention.
struct Tap {
    std::size_t lo, hi;
    double w_hi;
};

std::vector<Tap> upsample_taps(std::size_t in, std::size_t factor) {
    std::vector<Tap> taps(in * factor);
    for (std::size_t o = 0; o < taps.size(); ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        const double frac = src - static_cast<double>(lo);
        taps[o] = {lo, hi, frac};
    }
    return taps;
}

}  // namespace

Tensor bilinear_upsample2d(const Tensor& x, std::size_t factor) {
    if (factor < 1) throw DomainError("bilinear_upsample2d: factor must be >= 1");
    if (factor == 1) return x;
    const auto [count, h, w] = planes_of(x.shape(), "bilinear_upsample2d");
    const std::size_t oh = h * factor, ow = w * factor;
    const auto ty = upsample_taps(h, factor);
    const auto tx = upsample_taps(w, factor);
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape.back() = ow;
    Tensor out(out_shape);
    for (std::size_t p = 0; p < count; ++p) {
        const double* src = x.data().data() + p * h * w;
        double* dst = out.data().data() + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const Tap& b = tx[ox];
                // lerp as lo + w * (hi - lo) keeps constant planes exact
                const double t0 = src[a.lo * w + b.lo], t1 = src[a.lo * w + b.hi];
                const double b0 = src[a.hi * w + b.lo], b1 = src[a.hi * w + b.hi];
                const double top = t0 + b.w_hi * (t1 - t0);
                const double bot = b0 + b.w_hi * (b1 - b0);
                dst[oy * ow + ox] = top + a.w_hi * (bot - top);
            }
        }
    }
    return out;
}

Tensor bilinear_upsample2d_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t factor) {
    if (factor == 1) return grad_out.reshaped(input_shape);
    const auto [count, h, w] = planes_of(input_shape, "bilinear_upsample2d_backward");
    const std::size_t oh = h * factor, ow = w * factor;
    const auto ty = upsample_taps(h, factor);
    const auto tx = upsample_taps(w, factor);
    Tensor grad(input_shape);
    for (std::size_t p = 0; p < count; ++p) {
        const double* g = grad_out.data().data() + p * oh * ow;
        double* dst = grad.data().data() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const Tap& b = tx[ox];
                const double v = g[oy * ow + ox];
                dst[a.lo * w + b.lo] += v * (1.0 - a.w_hi) * (1.0 - b.w_hi);
                dst[a.lo * w + b.hi] += v * (1.0 - a.w_hi) * b.w_hi;
                dst[a.hi * w + b.lo] += v * a.w_hi * (1.0 - b.w_hi);
                dst[a.hi * w + b.hi] += v * a.w_hi * b.w_hi;
            }
        }
    }
    return grad;
}

}  // namespace mvd
