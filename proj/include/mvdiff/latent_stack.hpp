// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Multiview latent features [views, channels, H, W] and the layout
// conversions the operators need. Operators work internally on tokens
// [views, H*W, channels].

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "mvdiff/autograd.hpp"
#include "mvdiff/tensor.hpp"
#include "mvdiff/view_geometry.hpp"

namespace mvd {

struct LatentStack {
    Tensor features;  // [views, channels, height, width]
    ViewRing ring;

    LatentStack() = default;
    LatentStack(Tensor features, ViewRing ring);

    std::size_t views() const { return features.dim(0); }
    std::size_t channels() const { return features.dim(1); }
    std::size_t height() const { return features.dim(2); }
    std::size_t width() const { return features.dim(3); }
    std::size_t tokens_per_view() const { return height() * width(); }
};

// Memoised index lists keyed by a caller-chosen string.
IndexPtr cached_index(const std::string& key, const std::function<IndexList()>& build);

// [f, C, H, W] -> [f, H*W, C] and back.
IndexPtr channels_last_index(std::size_t views, std::size_t channels, std::size_t height, std::size_t width);
IndexPtr channels_first_index(std::size_t views, std::size_t channels, std::size_t height, std::size_t width);

Tensor to_tokens(const Tensor& features);
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

namespace ag {

Var to_tokens(Var features);  // [f,C,H,W] -> [f,HW,C]
Var from_tokens(Var tokens, std::size_t height, std::size_t width);

// Repeat a per-row vector over a middle axis: x[f, C] -> [f, n, C].
Var broadcast_rows(Var x, std::size_t n);

}  // namespace ag

}  // namespace mvd
