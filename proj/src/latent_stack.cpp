// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/latent_stack.hpp"

#include <map>
#include <mutex>

#include "mvdiff/errors.hpp"

namespace mvd {

LatentStack::LatentStack(Tensor f, ViewRing r) : features(std::move(f)), ring(std::move(r)) {
    if (features.rank() != 4) throw DimensionError("LatentStack: features must be [views, C, H, W]");
    if (static_cast<std::size_t>(ring.views) != features.dim(0)) {
        throw DimensionError("LatentStack: ring has " + std::to_string(ring.views) + " views, features " +
                             shape_str(features.shape()));
    }
}

IndexPtr cached_index(const std::string& key, const std::function<IndexList()>& build) {
    static std::mutex mu;
    static std::map<std::string, IndexPtr> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto ptr = std::make_shared<const IndexList>(build());
    cache.emplace(key, ptr);
    return ptr;
}

IndexPtr channels_last_index(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
    const std::string key = "cl/" + std::to_string(f) + "/" + std::to_string(c) + "/" + std::to_string(h) + "/" +
                            std::to_string(w);
    return cached_index(key, [=] {
        IndexList idx(f * c * h * w);
        const std::size_t p = h * w;
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t t = 0; t < p; ++t)
                for (std::size_t ch = 0; ch < c; ++ch)
                    idx[(v * p + t) * c + ch] = static_cast<std::int64_t>((v * c + ch) * p + t);
        return idx;
    });
}

IndexPtr channels_first_index(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
    const std::string key = "cf/" + std::to_string(f) + "/" + std::to_string(c) + "/" + std::to_string(h) + "/" +
                            std::to_string(w);
    return cached_index(key, [=] {
        IndexList idx(f * c * h * w);
        const std::size_t p = h * w;
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t t = 0; t < p; ++t)
                    idx[(v * c + ch) * p + t] = static_cast<std::int64_t>((v * p + t) * c + ch);
        return idx;
    });
}

Tensor to_tokens(const Tensor& features) {
    Tape tape;
    return ag::to_tokens(tape.constant(features)).value();
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
    Tape tape;
    return ag::from_tokens(tape.constant(tokens), height, width).value();
}

namespace ag {

Var to_tokens(Var features) {
    const Shape& s = features.shape();
    if (s.size() != 4) throw DimensionError("to_tokens: expected [f, C, H, W], got " + shape_str(s));
    return gather(features, channels_last_index(s[0], s[1], s[2], s[3]), {s[0], s[2] * s[3], s[1]});
}

Var from_tokens(Var tokens, std::size_t height, std::size_t width) {
    const Shape& s = tokens.shape();
    if (s.size() != 3 || s[1] != height * width) {
        throw DimensionError("from_tokens: " + shape_str(s) + " is not [f, " + std::to_string(height * width) +
                             ", C]");
    }
    return gather(tokens, channels_first_index(s[0], s[2], height, width), {s[0], s[2], height, width});
}

Var broadcast_rows(Var x, std::size_t n) {
    const Shape& s = x.shape();
    if (s.size() != 2) throw DimensionError("broadcast_rows: expected [f, C], got " + shape_str(s));
    const std::size_t f = s[0], c = s[1];
    auto idx = cached_index("bc/" + std::to_string(f) + "/" + std::to_string(n) + "/" + std::to_string(c), [=] {
        IndexList out(f * n * c);
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t ch = 0; ch < c; ++ch) out[(v * n + t) * c + ch] = static_cast<std::int64_t>(v * c + ch);
        return out;
    });
    return gather(x, idx, {f, n, c});
}

}  // namespace ag

}  // namespace mvd
