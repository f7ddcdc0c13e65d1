// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mvdiff/errors.hpp"

namespace mvd {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, true, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, false, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& v : inputs) {
        if (v.tape != this) throw DomainError("Var belongs to a different tape");
        needs = needs || nodes_.at(v.id).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Tensor(), false, needs, needs ? std::move(fn) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var out) {
    if (out.tape != this) throw DomainError("backward: Var belongs to a different tape");
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    Tensor& seed = grad_buffer(out);
    std::fill(seed.data().begin(), seed.data().end(), 1.0);
    for (std::size_t id = out.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? n.grad : Tensor(n.value.shape());
}

Tensor& Tape::grad_buffer(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

namespace ag {

namespace {

void same_shape(Var a, Var b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void axpy(Tensor& dst, const Tensor& src, double c = 1.0) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * s[i];
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    return x.tape->record(std::move(out), {x}, [x, deriv](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
    });
}

double sigmoid_scalar(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double softplus_scalar(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

}  // namespace

Var matmul(Var a, Var b) {
    Tensor out = mvd::matmul(a.value(), b.value());
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const std::size_t k = bv.dim(0), n = bv.dim(1), m = av.size() / k;
        if (t.requires_grad(a)) {
            kernels::gemm_nt(g.data().data(), bv.data().data(), t.grad_buffer(a).data().data(), m, n, k);
        }
        if (t.requires_grad(b)) {
            kernels::gemm_tn(av.data().data(), g.data().data(), t.grad_buffer(b).data().data(), k, m, n);
        }
    });
}

Var bmm(Var a, Var b) {
    Tensor out = mvd::bmm(a.value(), b.value());
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* gs = g.data().data() + s * m * n;
            if (t.requires_grad(a)) {
                kernels::gemm_nt(gs, bv.data().data() + s * k * n, t.grad_buffer(a).data().data() + s * m * k, m,
                                 n, k);
            }
            if (t.requires_grad(b)) {
                kernels::gemm_tn(av.data().data() + s * m * k, gs, t.grad_buffer(b).data().data() + s * k * n, k,
                                 m, n);
            }
        }
    });
}

Var bmm_nt(Var a, Var b) {
    Tensor out = mvd::bmm_nt(a.value(), b.value());
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(1);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* gs = g.data().data() + s * m * n;
            // out = a b^T:  ga = g b,  gb = g^T a
            if (t.requires_grad(a)) {
                kernels::gemm_nn(gs, bv.data().data() + s * n * k, t.grad_buffer(a).data().data() + s * m * k, m,
                                 n, k);
            }
            if (t.requires_grad(b)) {
                kernels::gemm_tn(gs, av.data().data() + s * m * k, t.grad_buffer(b).data().data() + s * n * k, n,
                                 m, k);
            }
        }
    });
}

Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Tensor out = a.value();
    axpy(out, b.value());
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) axpy(t.grad_buffer(a), g);
        if (t.requires_grad(b)) axpy(t.grad_buffer(b), g);
    });
}

Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Tensor out = a.value();
    axpy(out, b.value(), -1.0);
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) axpy(t.grad_buffer(a), g);
        if (t.requires_grad(b)) axpy(t.grad_buffer(b), g, -1.0);
    });
}

Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var x, double c) {
    Tensor out = x.value();
    for (auto& v : out.data()) v *= c;
    return x.tape->record(std::move(out), {x}, [x, c](Tape& t, const Tensor& g) { axpy(t.grad_buffer(x), g, c); });
}

Var add_scalar(Var x, double c) {
    Tensor out = x.value();
    for (auto& v : out.data()) v += c;
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) { axpy(t.grad_buffer(x), g); });
}

Var add_bias(Var x, Var b) {
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    const std::size_t n = xv.shape().back();
    if (bv.size() != n) throw DimensionError("add_bias: bias length differs from last axis");
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return x.tape->record(std::move(out), {x, b}, [x, b, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(x)) axpy(t.grad_buffer(x), g);
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
        }
    });
}

Var exp(Var x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var sigmoid(Var x) {
    return unary(x, sigmoid_scalar, [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 - s);
    });
}

Var silu(Var x) {
    return unary(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Var softplus(Var x) { return unary(x, softplus_scalar, sigmoid_scalar); }

Var square(Var x) {
    return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var sum(Var x) {
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    return x.tape->record(Tensor::scalar(acc), {x}, [x](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (auto& v : gx.data()) v += g[0];
    });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

Var softmax(Var x, MaskPtr mask) {
    Tensor out = mask ? mvd::masked_softmax(x.value(), *mask) : mvd::softmax(x.value(), -1);
    // id the output will receive; the backward reads the probabilities from it
    const Var y{x.tape, x.tape->size()};
    return x.tape->record(std::move(out), {x}, [x, y](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        Tensor& gx = t.grad_buffer(x);
        const std::size_t len = yv.shape().back();
        const std::size_t rows = yv.size() / len;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * len;
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) dot += g[base + i] * yv[base + i];
            for (std::size_t i = 0; i < len; ++i) gx[base + i] += yv[base + i] * (g[base + i] - dot);
        }
    });
}

Var layer_norm(Var x, double eps) {
    const Tensor& xv = x.value();
    if (xv.rank() == 0) throw DimensionError("layer_norm: needs at least one axis");
    const std::size_t len = xv.shape().back();
    const std::size_t rows = len == 0 ? 0 : xv.size() / len;
    Tensor out(xv.shape());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * len;
        double mu = 0.0;
        for (std::size_t i = 0; i < len; ++i) mu += xv[base + i];
        mu /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t i = 0; i < len; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
        var /= static_cast<double>(len);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < len; ++i) out[base + i] = (xv[base + i] - mu) * is;
    }
    const Var y{x.tape, x.tape->size()};
    return x.tape->record(std::move(out), {x}, [x, y, inv_std, len, rows](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        Tensor& gx = t.grad_buffer(x);
        const double n = static_cast<double>(len);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * len;
            double gsum = 0.0, gy = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                gsum += g[base + i];
                gy += g[base + i] * yv[base + i];
            }
            const double is = (*inv_std)[r];
            for (std::size_t i = 0; i < len; ++i) {
                gx[base + i] += is * (g[base + i] - gsum / n - yv[base + i] * gy / n);
            }
        }
    });
}

Var avg_pool2d(Var x, std::size_t stride) {
    Tensor out = mvd::avg_pool2d(x.value(), stride);
    return x.tape->record(std::move(out), {x}, [x, stride](Tape& t, const Tensor& g) {
        axpy(t.grad_buffer(x), mvd::avg_pool2d_backward(g, t.value(x).shape(), stride));
    });
}

Var bilinear_upsample2d(Var x, std::size_t factor) {
    Tensor out = mvd::bilinear_upsample2d(x.value(), factor);
    return x.tape->record(std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
        axpy(t.grad_buffer(x), mvd::bilinear_upsample2d_backward(g, t.value(x).shape(), factor));
    });
}

Var gather(Var x, IndexPtr index, Shape out_shape) {
    if (!index || index->size() != numel(out_shape)) {
        throw DimensionError("gather: index list does not match output shape " + shape_str(out_shape));
    }
    const Tensor& xv = x.value();
    const auto n = static_cast<std::int64_t>(xv.size());
    Tensor out(std::move(out_shape));
    for (std::size_t i = 0; i < index->size(); ++i) {
        const std::int64_t src = (*index)[i];
        if (src >= n) throw DomainError("gather: index out of range");
        out[i] = src < 0 ? 0.0 : xv[static_cast<std::size_t>(src)];
    }
    return x.tape->record(std::move(out), {x}, [x, index](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < index->size(); ++i) {
            const std::int64_t src = (*index)[i];
            if (src >= 0) gx[static_cast<std::size_t>(src)] += g[i];
        }
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var concat_last(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t na = av.shape().back(), nb = bv.shape().back();
    Shape lead_a(av.shape().begin(), av.shape().end() - 1);
    Shape lead_b(bv.shape().begin(), bv.shape().end() - 1);
    if (lead_a != lead_b) {
        throw DimensionError("concat_last: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    const std::size_t rows = av.size() / na;
    Shape out_shape = av.shape();
    out_shape.back() = na + nb;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.data().data() + r * na, na, out.data().data() + r * (na + nb));
        std::copy_n(bv.data().data() + r * nb, nb, out.data().data() + r * (na + nb) + na);
    }
    return a.tape->record(std::move(out), {a, b}, [a, b, na, nb, rows](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < na; ++i) ga[r * na + i] += g[r * (na + nb) + i];
            }
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < nb; ++i) gb[r * nb + i] += g[r * (na + nb) + na + i];
            }
        }
    });
}

}  // namespace ag

GradCheckReport grad_check(const ScalarFn& f, const Tensor& params, double eps, double tol) {
    auto evaluate = [&](const Tensor& p) {
        Tape tape;
        Var out = f(tape, tape.constant(p));
        if (out.value().size() != 1) throw DimensionError("grad_check: function must return a scalar");
        const double v = out.value()[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
        return v;
    };

    GradCheckReport report;
    {
        Tape tape;
        Var p = tape.variable(params);
        Var out = f(tape, p);
        if (out.value().size() != 1) throw DimensionError("grad_check: function must return a scalar");
        if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: function value is not finite");
        tape.backward(out);
        report.analytic = tape.grad(p);
    }
    report.numeric = Tensor(params.shape());
    Tensor probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + eps;
        const double up = evaluate(probe);
        probe[i] = params[i] - eps;
        const double down = evaluate(probe);
        probe[i] = params[i];
        report.numeric[i] = (up - down) / (2.0 * eps);

        const double a = report.analytic[i];
        const double n = report.numeric[i];
        const double abs_err = std::abs(a - n);
        const double rel = abs_err / std::max({std::abs(a), std::abs(n), kGradCheckFloor});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

}  // namespace mvd
