// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/attention.hpp"

#include <cmath>
#include <string>

#include "mvdiff/errors.hpp"

namespace mvd {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t({rows, cols});
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

std::string key_of(std::initializer_list<std::size_t> parts, const char* tag) {
    std::string k = tag;
    for (auto p : parts) k += "/" + std::to_string(p);
    return k;
}

// [B, n, h*dh] -> [B*h, n, dh]
IndexPtr split_heads_index(std::size_t b, std::size_t n, std::size_t h, std::size_t dh) {
    return cached_index(key_of({b, n, h, dh}, "split"), [=] {
        IndexList idx(b * n * h * dh);
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t hh = 0; hh < h; ++hh)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < dh; ++j)
                        idx[((s * h + hh) * n + i) * dh + j] =
                            static_cast<std::int64_t>((s * n + i) * h * dh + hh * dh + j);
        return idx;
    });
}

// [B*h, n, dh] -> [B, n, h*dh]
IndexPtr merge_heads_index(std::size_t b, std::size_t n, std::size_t h, std::size_t dh) {
    return cached_index(key_of({b, n, h, dh}, "merge"), [=] {
        IndexList idx(b * n * h * dh);
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t hh = 0; hh < h; ++hh)
                    for (std::size_t j = 0; j < dh; ++j)
                        idx[(s * n + i) * h * dh + hh * dh + j] =
                            static_cast<std::int64_t>(((s * h + hh) * n + i) * dh + j);
        return idx;
    });
}

// Attention on already-projected q/k/v with head splitting; no W_O.
Var attend(Var q, Var k, Var v, int heads, MaskPtr mask) {
    const std::size_t h = static_cast<std::size_t>(heads);
    if (h == 1) return ag::sdpa(q, k, v, mask);
    const std::size_t b = q.shape()[0], n = q.shape()[1], c = q.shape()[2], m = k.shape()[1];
    const std::size_t dh = c / h;
    Var qh = ag::gather(q, split_heads_index(b, n, h, dh), {b * h, n, dh});
    Var kh = ag::gather(k, split_heads_index(b, m, h, dh), {b * h, m, dh});
    Var vh = ag::gather(v, split_heads_index(b, m, h, dh), {b * h, m, dh});
    MaskPtr head_mask;
    if (mask) {
        auto expanded = std::make_shared<std::vector<unsigned char>>(b * h * n * m);
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t hh = 0; hh < h; ++hh)
                std::copy_n(mask->begin() + static_cast<std::ptrdiff_t>(s * n * m), n * m,
                            expanded->begin() + static_cast<std::ptrdiff_t>((s * h + hh) * n * m));
        head_mask = std::move(expanded);
    }
    Var out = ag::sdpa(qh, kh, vh, head_mask);
    return ag::gather(out, merge_heads_index(b, n, h, dh), {b, n, c});
}

void check_tokens(Var tokens, const AttentionVars& p, const char* what) {
    const Shape& s = tokens.shape();
    if (s.size() != 3) throw DimensionError(std::string(what) + ": tokens must be [f, HW, C], got " + shape_str(s));
    if (p.wq.shape()[0] != s[2]) {
        throw DimensionError(std::string(what) + ": params expect " + std::to_string(p.wq.shape()[0]) +
                             " channels, features have " + std::to_string(s[2]));
    }
}

}  // namespace

// ---------------------------------------------------------------------------

AttentionParams AttentionParams::identity(std::size_t channels, int heads) {
    Tensor eye({channels, channels});
    for (std::size_t i = 0; i < channels; ++i) eye.at({i, i}) = 1.0;
    AttentionParams p{eye, eye, eye, eye, heads};
    p.validate(channels);
    return p;
}

AttentionParams AttentionParams::random(std::size_t channels, std::mt19937_64& rng, int heads) {
    const double s = 1.0 / std::sqrt(static_cast<double>(channels));
    AttentionParams p{random_matrix(channels, channels, rng, s), random_matrix(channels, channels, rng, s),
                      random_matrix(channels, channels, rng, s), random_matrix(channels, channels, rng, s), heads};
    p.validate(channels);
    return p;
}

void AttentionParams::validate(std::size_t channels) const {
    const Shape sq{channels, channels};
    if (wq.shape() != sq || wk.shape() != sq || wv.shape() != sq || wo.shape() != sq) {
        throw DimensionError("AttentionParams: projections must be [" + std::to_string(channels) + "x" +
                             std::to_string(channels) + "]");
    }
    if (heads < 1 || channels % static_cast<std::size_t>(heads) != 0) {
        throw DimensionError("AttentionParams: " + std::to_string(heads) + " heads do not divide " +
                             std::to_string(channels) + " channels");
    }
}

AttentionVars bind_constant(Tape& tape, const AttentionParams& p) {
    return {tape.constant(p.wq), tape.constant(p.wk), tape.constant(p.wv), tape.constant(p.wo), p.heads};
}

ScoreMapper ScoreMapper::zeros(std::size_t channels, std::size_t text_dim, std::size_t hidden) {
    return {Tensor({channels + text_dim, hidden}), Tensor({hidden}), Tensor({hidden, 1}), Tensor({1})};
}

ScoreMapper ScoreMapper::random(std::size_t channels, std::size_t text_dim, std::size_t hidden,
                                std::mt19937_64& rng) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(channels + text_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    return {random_matrix(channels + text_dim, hidden, rng, s1), Tensor({hidden}), random_matrix(hidden, 1, rng, s2),
            Tensor({1})};
}

ScoreMapperVars bind_constant(Tape& tape, const ScoreMapper& m) {
    return {tape.constant(m.w1), tape.constant(m.b1), tape.constant(m.w2), tape.constant(m.b2)};
}

void AirConfig::validate(std::size_t height, std::size_t width) const {
    if (query_stride < 1 || kv_stride < 1) throw DomainError("AirConfig: strides must be >= 1");
    if (query_stride > kv_stride) throw DomainError("AirConfig: query stride must not exceed key/value stride");
    for (std::size_t s : {query_stride, kv_stride}) {
        if (height % s != 0 || width % s != 0) {
            throw DimensionError("AirConfig: stride " + std::to_string(s) + " does not divide " +
                                 std::to_string(height) + "x" + std::to_string(width));
        }
    }
}

IndexPtr trajectory_key_slots(const ViewRing& ring) {
    ring.validate();
    std::string key = key_of({static_cast<std::size_t>(ring.views), static_cast<std::size_t>(ring.width),
                              static_cast<std::size_t>(ring.height)},
                             "traj");
    for (double a : ring.azimuths_deg) key += "/" + std::to_string(a);
    return cached_index(key, [&ring] {
        const int f = ring.views, w = ring.width, h = ring.height;
        const std::size_t p = static_cast<std::size_t>(w * h);
        IndexList idx(static_cast<std::size_t>(f) * p * kTrajectorySlots, -1);
        for (int v = 0; v < f; ++v) {
            const int prev = (v + f - 1) % f;
            const int next = (v + 1) % f;
            const struct {
                int view;
                double delta;
            } groups[3] = {{prev, delta_azimuth(ring, v, prev)}, {v, 0.0}, {next, delta_azimuth(ring, v, next)}};
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t q = static_cast<std::size_t>(v) * p + static_cast<std::size_t>(y * w + x);
                    for (std::size_t g = 0; g < 3; ++g) {
                        const auto win = trajectory_window(x, y, groups[g].delta, w, h);
                        for (std::size_t s = 0; s < win.size(); ++s) {
                            idx[q * kTrajectorySlots + g * 9 + s] =
                                static_cast<std::int64_t>(static_cast<std::size_t>(groups[g].view) * p +
                                                          static_cast<std::size_t>(win[s].row * w + win[s].col));
                        }
                    }
                }
            }
        }
        return idx;
    });
}

// ---------------------------------------------------------------------------

namespace ag {

Var sdpa(Var q, Var k, Var v, MaskPtr mask) {
    const Shape& qs = q.shape();
    const Shape& ks = k.shape();
    const Shape& vs = v.shape();
    if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || qs[0] != ks[0] || ks[0] != vs[0] ||
        qs[2] != ks[2] || ks[1] != vs[1]) {
        throw DimensionError("sdpa: incompatible q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " +
                             shape_str(vs));
    }
    if (mask && mask->size() != qs[0] * qs[1] * ks[1]) throw DimensionError("sdpa: mask size mismatch");
    Var logits = scale(bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(qs[2])));
    return bmm(softmax(logits, std::move(mask)), v);
}

Var multi_head_attention(Var q_in, Var kv_in, const AttentionVars& p, MaskPtr mask) {
    Var q = matmul(q_in, p.wq);
    Var k = matmul(kv_in, p.wk);
    Var v = matmul(kv_in, p.wv);
    return matmul(attend(q, k, v, p.heads, std::move(mask)), p.wo);
}

Var adjacent_attention(Var tokens, const AttentionVars& p) {
    check_tokens(tokens, p, "adjacent_attention");
    const std::size_t f = tokens.shape()[0], n = tokens.shape()[1], c = tokens.shape()[2];
    auto idx = cached_index(key_of({f, n, c}, "adj"), [=] {
        IndexList out(f * 3 * n * c);
        for (std::size_t v = 0; v < f; ++v) {
            const std::size_t views[3] = {(v + f - 1) % f, v, (v + 1) % f};
            for (std::size_t g = 0; g < 3; ++g)
                for (std::size_t t = 0; t < n; ++t)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        out[((v * 3 + g) * n + t) * c + ch] = static_cast<std::int64_t>((views[g] * n + t) * c + ch);
        }
        return out;
    });
    Var q = matmul(tokens, p.wq);
    Var k = gather(matmul(tokens, p.wk), idx, {f, 3 * n, c});
    Var v = gather(matmul(tokens, p.wv), idx, {f, 3 * n, c});
    return matmul(attend(q, k, v, p.heads, nullptr), p.wo);
}

Var trajectory_attention(Var tokens, const ViewRing& ring, const AttentionVars& p) {
    check_tokens(tokens, p, "trajectory_attention");
    const std::size_t f = tokens.shape()[0], n = tokens.shape()[1], c = tokens.shape()[2];
    if (static_cast<std::size_t>(ring.views) != f || static_cast<std::size_t>(ring.width * ring.height) != n) {
        throw DimensionError("trajectory_attention: ring does not match token grid");
    }
    const IndexPtr slots = trajectory_key_slots(ring);
    std::string key = key_of({f, n, c}, "trajkv");
    for (double a : ring.azimuths_deg) key += "/" + std::to_string(a);
    key += "/" + std::to_string(ring.width);
    auto kv_idx = cached_index(key, [&] {
        IndexList out(slots->size() * c);
        for (std::size_t s = 0; s < slots->size(); ++s) {
            const std::int64_t tok = (*slots)[s];
            for (std::size_t ch = 0; ch < c; ++ch) {
                out[s * c + ch] = tok < 0 ? -1 : tok * static_cast<std::int64_t>(c) + static_cast<std::int64_t>(ch);
            }
        }
        return out;
    });
    auto mask = std::make_shared<std::vector<unsigned char>>(slots->size());
    for (std::size_t s = 0; s < slots->size(); ++s) (*mask)[s] = (*slots)[s] >= 0 ? 1 : 0;

    const std::size_t rows = f * n;
    Var q = reshape(matmul(tokens, p.wq), {rows, 1, c});
    Var k = gather(matmul(tokens, p.wk), kv_idx, {rows, kTrajectorySlots, c});
    Var v = gather(matmul(tokens, p.wv), kv_idx, {rows, kTrajectorySlots, c});
    Var out = reshape(attend(q, k, v, p.heads, mask), {f, n, c});
    return matmul(out, p.wo);
}

Var score_map(Var tokens, Var text_emb, const ScoreMapperVars& m) {
    const Shape& s = tokens.shape();
    if (s.size() != 3) throw DimensionError("score_map: tokens must be [f, HW, C]");
    const std::size_t f = s[0], n = s[1], c = s[2], e = text_emb.value().size();
    if (m.w1.shape()[0] != c + e) {
        throw DimensionError("score_map: mapper expects input width " + std::to_string(m.w1.shape()[0]) + ", got " +
                             std::to_string(c) + " + " + std::to_string(e));
    }
    auto idx = cached_index(key_of({f * n, e}, "textbc"), [=] {
        IndexList out(f * n * e);
        for (std::size_t r = 0; r < f * n; ++r)
            for (std::size_t j = 0; j < e; ++j) out[r * e + j] = static_cast<std::int64_t>(j);
        return out;
    });
    Var text = gather(text_emb, idx, {f * n, e});
    Var joined = concat_last(reshape(tokens, {f * n, c}), text);
    Var hidden = silu(add_bias(matmul(joined, m.w1), m.b1));
    Var logit = add_bias(matmul(hidden, m.w2), m.b2);
    return reshape(sigmoid(logit), {f, n});
}

Var air_attention(Var tokens, Var scores, const AirConfig& cfg, const AttentionVars& p, std::size_t height,
                  std::size_t width) {
    check_tokens(tokens, p, "air_attention");
    cfg.validate(height, width);
    const std::size_t f = tokens.shape()[0], n = tokens.shape()[1], c = tokens.shape()[2];
    if (n != height * width) throw DimensionError("air_attention: token count does not match height x width");
    if (scores.shape() != Shape{f, n}) {
        throw DimensionError("air_attention: scores must be [f, HW], got " + shape_str(scores.shape()));
    }
    const std::size_t tau = cfg.query_stride, rho = cfg.kv_stride;
    const std::size_t nk = n / (rho * rho);

    auto score_idx = cached_index(key_of({f, n, c}, "scorebc"), [=] {
        IndexList out(f * n * c);
        for (std::size_t r = 0; r < f * n; ++r)
            for (std::size_t ch = 0; ch < c; ++ch) out[r * c + ch] = static_cast<std::int64_t>(r);
        return out;
    });
    Var s = gather(scores, score_idx, {f, n, c});

    auto pooled = [&](Var proj, std::size_t stride) {
        Var planes = from_tokens(mul(proj, s), height, width);  // [f, C, H, W]
        return to_tokens(avg_pool2d(planes, stride));           // [f, HW/stride^2, C]
    };
    Var q = pooled(matmul(tokens, p.wq), tau);
    Var k = pooled(matmul(tokens, p.wk), rho);
    Var v = pooled(matmul(tokens, p.wv), rho);

    // Every view attends over the pooled keys/values of all views.
    auto all_idx = cached_index(key_of({f, nk, c}, "allviews"), [=] {
        IndexList out(f * f * nk * c);
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t j = 0; j < f * nk * c; ++j) out[v * f * nk * c + j] = static_cast<std::int64_t>(j);
        return out;
    });
    Var k_all = gather(k, all_idx, {f, f * nk, c});
    Var v_all = gather(v, all_idx, {f, f * nk, c});
    Var coarse = attend(q, k_all, v_all, p.heads, nullptr);  // [f, nq, C]
    Var planes = from_tokens(coarse, height / tau, width / tau);
    Var full = to_tokens(bilinear_upsample2d(planes, tau));
    return matmul(full, p.wo);
}

}  // namespace ag

// ---------------------------------------------------------------------------
// Tensor-level entry points.

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v) {
    Tape tape;
    if (q.rank() == 2) {
        if (k.rank() != 2 || v.rank() != 2) throw DimensionError("sdpa: mixed ranks");
        Var out = ag::sdpa(tape.constant(q.reshaped({1, q.dim(0), q.dim(1)})),
                           tape.constant(k.reshaped({1, k.dim(0), k.dim(1)})),
                           tape.constant(v.reshaped({1, v.dim(0), v.dim(1)})));
        return out.value().reshaped({q.dim(0), v.dim(1)});
    }
    return ag::sdpa(tape.constant(q), tape.constant(k), tape.constant(v)).value();
}

namespace {

template <typename Op>
LatentStack run_on_tokens(const LatentStack& stack, const AttentionParams& params, Op op) {
    params.validate(stack.channels());
    Tape tape;
    Var tokens = ag::to_tokens(tape.constant(stack.features));
    Var out = op(tape, tokens, bind_constant(tape, params));
    return LatentStack(ag::from_tokens(out, stack.height(), stack.width()).value(), stack.ring);
}

}  // namespace

LatentStack adjacent_attention(const LatentStack& stack, const AttentionParams& params) {
    return run_on_tokens(stack, params,
                         [](Tape&, Var tokens, const AttentionVars& p) { return ag::adjacent_attention(tokens, p); });
}

LatentStack trajectory_attention(const LatentStack& stack, const ViewRing& ring, const AttentionParams& params) {
    if (static_cast<std::size_t>(ring.width) != stack.width() ||
        static_cast<std::size_t>(ring.height) != stack.height()) {
        throw DimensionError("trajectory_attention: ring resolution differs from latent grid");
    }
    return run_on_tokens(stack, params, [&ring](Tape&, Var tokens, const AttentionVars& p) {
        return ag::trajectory_attention(tokens, ring, p);
    });
}

Tensor score_map(const LatentStack& stack, const Tensor& text_emb, const ScoreMapper& mapper) {
    Tape tape;
    Var tokens = ag::to_tokens(tape.constant(stack.features));
    Var s = ag::score_map(tokens, tape.constant(text_emb), bind_constant(tape, mapper));
    return s.value().reshaped({stack.views(), 1, stack.height(), stack.width()});
}

LatentStack air_attention(const LatentStack& stack, const Tensor& scores, const AirConfig& cfg,
                          const AttentionParams& params) {
    if (scores.shape() != Shape{stack.views(), 1, stack.height(), stack.width()}) {
        throw DimensionError("air_attention: scores must be [f, 1, H, W], got " + shape_str(scores.shape()));
    }
    return run_on_tokens(stack, params, [&](Tape& tape, Var tokens, const AttentionVars& p) {
        Var s = tape.constant(scores.reshaped({stack.views(), stack.tokens_per_view()}));
        return ag::air_attention(tokens, s, cfg, p, stack.height(), stack.width());
    });
}

}  // namespace mvd
