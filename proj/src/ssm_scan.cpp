// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/ssm_scan.hpp"

#include <algorithm>
#include <cmath>

#include "mvdiff/errors.hpp"

namespace mvd {

std::string to_string(ScanStrategy s) {
    switch (s) {
        case ScanStrategy::SpiralBidirectional: return "spiral-bidirectional";
        case ScanStrategy::SpatialFirstBidirectional: return "spatial-first-bidirectional";
        case ScanStrategy::RowMajor: return "row-major";
    }
    return "unknown";
}

ScanStrategy parse_scan_strategy(const std::string& name) {
    if (name == "spiral-bidirectional" || name == "spiral") return ScanStrategy::SpiralBidirectional;
    if (name == "spatial-first-bidirectional" || name == "spatial-first") {
        return ScanStrategy::SpatialFirstBidirectional;
    }
    if (name == "row-major") return ScanStrategy::RowMajor;
    throw DomainError("unknown scan strategy '" + name + "'");
}

std::vector<std::size_t> spiral_order(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw DomainError("spiral_order: extents must be >= 1");
    const auto h = static_cast<long>(height), w = static_cast<long>(width);
    long r = (h - 1) / 2, c = (w - 1) / 2;
    constexpr long dr[4] = {0, 1, 0, -1};  // right, down, left, up
    constexpr long dc[4] = {1, 0, -1, 0};

    std::vector<std::size_t> order;
    order.reserve(height * width);
    auto emit = [&] {
        if (r >= 0 && r < h && c >= 0 && c < w) order.push_back(static_cast<std::size_t>(r * w + c));
    };
    emit();
    for (long leg = 0; order.size() < height * width; ++leg) {
        const long len = leg / 2 + 1;
        const int dir = static_cast<int>(leg % 4);
        for (long s = 0; s < len && order.size() < height * width; ++s) {
            r += dr[dir];
            c += dc[dir];
            emit();
        }
    }
    return order;
}

ScanOrder ScanOrder::build(std::size_t views, std::size_t height, std::size_t width, ScanStrategy strategy) {
    if (views == 0) throw DomainError("ScanOrder: need at least one view");
    ScanOrder o;
    o.views = views;
    o.height = height;
    o.width = width;
    o.strategy = strategy;
    const std::size_t p = height * width;
    if (strategy == ScanStrategy::SpiralBidirectional) {
        o.spatial = spiral_order(height, width);
    } else {
        if (p == 0) throw DomainError("ScanOrder: extents must be >= 1");
        o.spatial.resize(p);
        for (std::size_t i = 0; i < p; ++i) o.spatial[i] = i;
    }
    o.forward.reserve(views * p);
    for (std::size_t v = 0; v < views; ++v) {
        for (std::size_t s : o.spatial) o.forward.push_back(v * p + s);
    }
    switch (strategy) {
        case ScanStrategy::SpiralBidirectional:
            o.backward.reserve(views * p);
            for (std::size_t v = views; v-- > 0;) {
                for (std::size_t s : o.spatial) o.backward.push_back(v * p + s);
            }
            break;
        case ScanStrategy::SpatialFirstBidirectional:
            o.backward.assign(o.forward.rbegin(), o.forward.rend());
            break;
        case ScanStrategy::RowMajor:
            o.backward = o.forward;
            break;
    }
    return o;
}

std::vector<std::size_t> ScanOrder::inverse(bool reverse_views) const {
    const auto& fwd = pass(reverse_views);
    std::vector<std::size_t> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
    return inv;
}

namespace {

void check_order(const ScanOrder& order, std::size_t views, std::size_t h, std::size_t w) {
    if (order.views != views || order.height != h || order.width != w) {
        throw DimensionError("scan order built for " + std::to_string(order.views) + "x" +
                             std::to_string(order.height) + "x" + std::to_string(order.width) +
                             ", stack is " + std::to_string(views) + "x" + std::to_string(h) + "x" +
                             std::to_string(w));
    }
}

IndexPtr row_gather_index(const std::vector<std::size_t>& rows, std::size_t c) {
    auto idx = std::make_shared<IndexList>(rows.size() * c);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t ch = 0; ch < c; ++ch) (*idx)[i * c + ch] = static_cast<std::int64_t>(rows[i] * c + ch);
    return idx;
}

IndexPtr cached_rows(const ScanOrder& order, bool reverse, bool inverse, std::size_t c) {
    const std::string key = "scan/" + to_string(order.strategy) + "/" + std::to_string(order.views) + "/" +
                            std::to_string(order.height) + "/" + std::to_string(order.width) + "/" +
                            std::to_string(c) + (reverse ? "/r" : "/f") + (inverse ? "/inv" : "/fwd");
    return cached_index(key, [&] {
        const auto rows = inverse ? order.inverse(reverse) : order.pass(reverse);
        return *row_gather_index(rows, c);
    });
}

}  // namespace

Tensor sbscan_permute(const LatentStack& stack, const ScanOrder& order, bool reverse_views) {
    check_order(order, stack.views(), stack.height(), stack.width());
    const Tensor tokens = to_tokens(stack.features);  // [f, P, C]
    const std::size_t c = stack.channels();
    const auto& seq = order.pass(reverse_views);
    Tensor out({seq.size(), c});
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = tokens[seq[i] * c + ch];
    return out;
}

Tensor sbscan_unpermute(const Tensor& sequence, const ScanOrder& order, bool reverse_views) {
    if (sequence.rank() != 2 || sequence.dim(0) != order.length()) {
        throw DimensionError("sbscan_unpermute: sequence " + shape_str(sequence.shape()) + " does not match order");
    }
    const std::size_t c = sequence.dim(1);
    const auto& seq = order.pass(reverse_views);
    Tensor tokens({order.views, order.height * order.width, c});
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t ch = 0; ch < c; ++ch) tokens[seq[i] * c + ch] = sequence[i * c + ch];
    return from_tokens(tokens, order.height, order.width);
}

// ---------------------------------------------------------------------------

SsmParams SsmParams::random(std::size_t channels, std::size_t state, std::mt19937_64& rng) {
    SsmParams p;
    p.a = Tensor({channels, state});
    for (std::size_t d = 0; d < channels; ++d)
        for (std::size_t n = 0; n < state; ++n) p.a.at({d, n}) = -static_cast<double>(n + 1);
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(channels)));
    std::uniform_real_distribution<double> dt(std::log(1e-3), std::log(1e-1));
    p.w_delta = Tensor({channels, channels});
    for (auto& v : p.w_delta.data()) v = 0.1 * nd(rng);
    p.b_delta = Tensor({channels});
    for (auto& v : p.b_delta.data()) v = std::log(std::expm1(std::exp(dt(rng))));  // softplus^-1
    p.w_b = Tensor({channels, state});
    for (auto& v : p.w_b.data()) v = nd(rng);
    p.w_c = Tensor({channels, state});
    for (auto& v : p.w_c.data()) v = nd(rng);
    return p;
}

void SsmParams::validate() const {
    if (a.rank() != 2) throw DimensionError("SsmParams: A must be [D, N]");
    const std::size_t d = a.dim(0), n = a.dim(1);
    if (w_delta.shape() != Shape{d, d} || b_delta.shape() != Shape{d} || w_b.shape() != Shape{d, n} ||
        w_c.shape() != Shape{d, n}) {
        throw DimensionError("SsmParams: projection shapes inconsistent with A " + shape_str(a.shape()));
    }
    for (double v : a.data()) {
        if (!(v < 0.0)) throw DomainError("SsmParams: state matrix entries must be negative");
    }
}

SsmVars bind_constant(Tape& tape, const SsmParams& p) {
    return {tape.constant(p.a), tape.constant(p.w_delta), tape.constant(p.b_delta), tape.constant(p.w_b),
            tape.constant(p.w_c)};
}

Discretized discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta) {
    if (!(delta > 0.0)) throw DomainError("discretize_zoh: step must be positive");
    Tensor a_bar(a_diag.shape());
    for (std::size_t i = 0; i < a_bar.size(); ++i) a_bar[i] = std::exp(delta * a_diag[i]);
    Tensor b_bar(b.shape());
    for (std::size_t i = 0; i < b_bar.size(); ++i) b_bar[i] = delta * b[i];
    return {std::move(a_bar), std::move(b_bar)};
}

namespace {

double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

void check_core_shapes(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c) {
    if (x.rank() != 2 || a.rank() != 2) throw DimensionError("scan core: x and A must be rank 2");
    const std::size_t len = x.dim(0), d = x.dim(1), n = a.dim(1);
    if (delta.shape() != x.shape() || a.dim(0) != d || b.shape() != Shape{len, n} || c.shape() != Shape{len, n}) {
        throw DimensionError("scan core: inconsistent shapes x " + shape_str(x.shape()) + ", delta " +
                             shape_str(delta.shape()) + ", A " + shape_str(a.shape()) + ", B " +
                             shape_str(b.shape()) + ", C " + shape_str(c.shape()));
    }
}

}  // namespace

SelectiveInputs selective_projections_reference(const Tensor& x, const SsmParams& p) {
    p.validate();
    if (x.rank() != 2 || x.dim(1) != p.channels()) {
        throw DimensionError("selective scan: input " + shape_str(x.shape()) + " vs " +
                             std::to_string(p.channels()) + " channels");
    }
    const std::size_t len = x.dim(0), d = p.channels(), n = p.state();
    SelectiveInputs in{Tensor({len, d}), Tensor({len, n}), Tensor({len, n})};
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) acc += x[t * d + i] * p.w_delta[i * d + j];
            in.delta[t * d + j] = softplus(acc + p.b_delta[j]);
        }
        for (std::size_t s = 0; s < n; ++s) {
            double ab = 0.0, ac = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                ab += x[t * d + i] * p.w_b[i * n + s];
                ac += x[t * d + i] * p.w_c[i * n + s];
            }
            in.b[t * n + s] = ab;
            in.c[t * n + s] = ac;
        }
    }
    return in;
}

Tensor scan_core_sequential(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                            const Tensor& c, Tensor* states) {
    check_core_shapes(x, delta, a, b, c);
    const std::size_t len = x.dim(0), d = x.dim(1), n = a.dim(1);
    Tensor y({len, d});
    std::vector<double> h(d * n, 0.0);
    if (states) *states = Tensor({len, d, n});
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dt = delta[t * d + j];
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double a_bar = std::exp(dt * a[j * n + s]);
                const double b_bar = dt * b[t * n + s];
                double& hs = h[j * n + s];
                hs = a_bar * hs + b_bar * x[t * d + j];
                acc += c[t * n + s] * hs;
            }
            y[t * d + j] = acc;
        }
        if (states) std::copy(h.begin(), h.end(), states->data().begin() + static_cast<std::ptrdiff_t>(t * d * n));
    }
    return y;
}

Tensor selective_scan_sequential(const Tensor& x, const SsmParams& p) {
    const SelectiveInputs in = selective_projections_reference(x, p);
    return scan_core_sequential(x, in.delta, p.a, in.b, in.c);
}

Tensor scan_core_chunked(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                         const ScanOptions& opt, Tensor* states) {
    check_core_shapes(x, delta, a, b, c);
    if (opt.chunk == 0) throw DomainError("scan: chunk size must be >= 1");
    const std::size_t len = x.dim(0), d = x.dim(1), n = a.dim(1);
    const std::size_t chunk = opt.chunk;
    const std::size_t chunks = (len + chunk - 1) / chunk;

    // h[t, j, s] laid out like `states`.
    Tensor hs({len, d, n});
    double* h = hs.data().data();
    auto a_bar = [&](std::size_t t, std::size_t j, std::size_t s) { return std::exp(delta[t * d + j] * a[j * n + s]); };
    auto b_term = [&](std::size_t t, std::size_t j, std::size_t s) {
        return delta[t * d + j] * b[t * n + s] * x[t * d + j];
    };

    if (opt.deterministic) {
        // Chunks only block the loop; the state is carried exactly.
        std::vector<double> carry(d * n, 0.0);
        for (std::size_t k = 0; k < chunks; ++k) {
            const std::size_t begin = k * chunk, end = std::min(len, begin + chunk);
            for (std::size_t t = begin; t < end; ++t) {
                for (std::size_t j = 0; j < d; ++j) {
                    for (std::size_t s = 0; s < n; ++s) {
                        double& hc = carry[j * n + s];
                        hc = a_bar(t, j, s) * hc + b_term(t, j, s);
                        h[(t * d + j) * n + s] = hc;
                    }
                }
            }
        }
    } else {
        // Pass 1 (independent per chunk): local scan from a zero state and the
        // running product of the decays.
        Tensor decay({len, d, n});
        double* pd = decay.data().data();
        for (std::size_t k = 0; k < chunks; ++k) {
            const std::size_t begin = k * chunk, end = std::min(len, begin + chunk);
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t s = 0; s < n; ++s) {
                    double local = 0.0, prod = 1.0;
                    for (std::size_t t = begin; t < end; ++t) {
                        const double ab = a_bar(t, j, s);
                        local = ab * local + b_term(t, j, s);
                        prod = t == begin ? ab : prod * ab;
                        h[(t * d + j) * n + s] = local;
                        pd[(t * d + j) * n + s] = prod;
                    }
                }
            }
        }
        // Pass 2 (sequential): state entering each chunk.
        std::vector<double> entering(chunks * d * n, 0.0);
        for (std::size_t k = 1; k < chunks; ++k) {
            const std::size_t last = k * chunk - 1;
            for (std::size_t i = 0; i < d * n; ++i) {
                entering[k * d * n + i] = pd[last * d * n + i] * entering[(k - 1) * d * n + i] + h[last * d * n + i];
            }
        }
        // Pass 3 (independent per chunk): fold the entering state in.
        for (std::size_t k = 1; k < chunks; ++k) {
            const std::size_t begin = k * chunk, end = std::min(len, begin + chunk);
            for (std::size_t t = begin; t < end; ++t) {
                for (std::size_t i = 0; i < d * n; ++i) {
                    h[t * d * n + i] = h[t * d * n + i] + pd[t * d * n + i] * entering[k * d * n + i];
                }
            }
        }
    }

    Tensor y({len, d});
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s) acc += c[t * n + s] * h[(t * d + j) * n + s];
            y[t * d + j] = acc;
        }
    }
    if (states) *states = std::move(hs);
    return y;
}

namespace ag {

Var scan_core(Var x, Var delta, Var a, Var b, Var c, const ScanOptions& opt) {
    auto states = std::make_shared<Tensor>();
    Tensor y = scan_core_chunked(x.value(), delta.value(), a.value(), b.value(), c.value(), opt, states.get());
    Tape& tape = *x.tape;
    // record() only takes up to the initializer list; chain via a dummy-free lambda.
    return tape.record(std::move(y), {x, delta, a, b, c}, [x, delta, a, b, c, states](Tape& t, const Tensor& gy) {
        const Tensor& xv = t.value(x);
        const Tensor& dv = t.value(delta);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const Tensor& cv = t.value(c);
        const Tensor& h = *states;
        const std::size_t len = xv.dim(0), d = xv.dim(1), n = av.dim(1);

        Tensor gx(xv.shape()), gd(dv.shape()), ga(av.shape()), gb(bv.shape()), gc(cv.shape());
        std::vector<double> carry(d * n, 0.0);  // a_{t+1} * dL/dh_{t+1}
        for (std::size_t t = len; t-- > 0;) {
            for (std::size_t j = 0; j < d; ++j) {
                const double g = gy[t * d + j];
                const double dt = dv[t * d + j];
                const double xj = xv[t * d + j];
                double gdt = 0.0, gxj = 0.0;
                for (std::size_t s = 0; s < n; ++s) {
                    const std::size_t hi = (t * d + j) * n + s;
                    const double ht = h[hi];
                    const double hp = t > 0 ? h[hi - d * n] : 0.0;
                    const double aa = av[j * n + s];
                    const double ab = std::exp(dt * aa);
                    const double gh = g * cv[t * n + s] + carry[j * n + s];
                    gc[t * n + s] += g * ht;
                    gdt += gh * (hp * ab * aa + bv[t * n + s] * xj);
                    ga[j * n + s] += gh * hp * ab * dt;
                    gb[t * n + s] += gh * dt * xj;
                    gxj += gh * dt * bv[t * n + s];
                    carry[j * n + s] = ab * gh;
                }
                gd[t * d + j] += gdt;
                gx[t * d + j] += gxj;
            }
        }
        auto acc = [&t](Var v, const Tensor& g) {
            if (!t.requires_grad(v)) return;
            Tensor& buf = t.grad_buffer(v);
            for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
        };
        acc(x, gx);
        acc(delta, gd);
        acc(a, ga);
        acc(b, gb);
        acc(c, gc);
    });
}

Var selective_scan(Var x, const SsmVars& p, const ScanOptions& opt) {
    if (x.shape().size() != 2 || x.shape()[1] != p.a.shape()[0]) {
        throw DimensionError("selective_scan: input " + shape_str(x.shape()) + " vs state matrix " +
                             shape_str(p.a.shape()));
    }
    Var delta = softplus(add_bias(matmul(x, p.w_delta), p.b_delta));
    Var b = matmul(x, p.w_b);
    Var c = matmul(x, p.w_c);
    return scan_core(x, delta, p.a, b, c, opt);
}

Var rapid_glance(Var tokens, const ScanOrder& order, const SsmVars& p, const ScanOptions& opt) {
    const Shape& s = tokens.shape();
    if (s.size() != 3 || s[0] != order.views || s[1] != order.height * order.width) {
        throw DimensionError("rapid_glance: tokens " + shape_str(s) + " do not match scan order");
    }
    const std::size_t len = s[0] * s[1], c = s[2];
    auto run_pass = [&](bool reverse) {
        Var seq = gather(tokens, cached_rows(order, reverse, false, c), {len, c});
        Var y = selective_scan(seq, p, opt);
        return gather(y, cached_rows(order, reverse, true, c), s);
    };
    Var forward = run_pass(false);
    if (order.strategy == ScanStrategy::RowMajor) return add(tokens, forward);
    Var backward = run_pass(true);
    return add(tokens, scale(add(forward, backward), 0.5));
}

}  // namespace ag

Tensor selective_scan(const Tensor& x, const SsmParams& p, ScanOptions opt) {
    p.validate();
    Tape tape;
    return ag::selective_scan(tape.constant(x), bind_constant(tape, p), opt).value();
}

LatentStack rapid_glance(const LatentStack& stack, const SsmParams& p, ScanStrategy strategy, ScanOptions opt) {
    p.validate();
    if (stack.channels() != p.channels()) {
        throw DimensionError("rapid_glance: params have " + std::to_string(p.channels()) + " channels, stack " +
                             std::to_string(stack.channels()));
    }
    const ScanOrder order = ScanOrder::build(stack.views(), stack.height(), stack.width(), strategy);
    Tape tape;
    Var tokens = ag::to_tokens(tape.constant(stack.features));
    Var out = ag::rapid_glance(tokens, order, bind_constant(tape, p), opt);
    return LatentStack(ag::from_tokens(out, stack.height(), stack.width()).value(), stack.ring);
}

}  // namespace mvd
