// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Cross-view attention operators:
//   adjacent_attention   - queries of view i over keys/values of views
//                          i-1, i, i+1 (cyclic ring)
//   trajectory_attention - per pixel, over 3x3 windows around the
//                          rotation-predicted column in both ring
//                          neighbours plus its own 3x3 neighbourhood
//   air_attention        - score-weighted pooled attention across all
//                          views, upsampled back to full resolution
//
// Every operator returns the attended features after the output projection
// and without a residual; the caller adds the skip connection.

#pragma once

#include <cstddef>
#include <random>

#include "mvdiff/autograd.hpp"
#include "mvdiff/latent_stack.hpp"
#include "mvdiff/tensor.hpp"
#include "mvdiff/view_geometry.hpp"

namespace mvd {

// Projections shared across space and view. All matrices are [C, C]; heads
// split the channel axis evenly.
struct AttentionParams {
    Tensor wq, wk, wv, wo;
    int heads = 1;

    static AttentionParams identity(std::size_t channels, int heads = 1);
    static AttentionParams random(std::size_t channels, std::mt19937_64& rng, int heads = 1);

    std::size_t channels() const { return wq.dim(0); }
    void validate(std::size_t channels) const;
};

struct AttentionVars {
    Var wq, wk, wv, wo;
    int heads = 1;
};

AttentionVars bind_constant(Tape& tape, const AttentionParams& p);

// Two-layer MLP on [features, text embedding] -> sigmoid score per token.
struct ScoreMapper {
    Tensor w1;  // [C + E, hidden]
    Tensor b1;  // [hidden]
    Tensor w2;  // [hidden, 1]
    Tensor b2;  // [1]

    static ScoreMapper zeros(std::size_t channels, std::size_t text_dim, std::size_t hidden);
    static ScoreMapper random(std::size_t channels, std::size_t text_dim, std::size_t hidden, std::mt19937_64& rng);
};

struct ScoreMapperVars {
    Var w1, b1, w2, b2;
};

ScoreMapperVars bind_constant(Tape& tape, const ScoreMapper& m);

struct AirConfig {
    std::size_t query_stride = 2;  // tau
    std::size_t kv_stride = 4;     // rho, >= tau

    void validate(std::size_t height, std::size_t width) const;
};

// softmax(q k^T / sqrt(d)) v for q[n,d], k[m,d], v[m,dv] or batched [B,...].
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v);

LatentStack adjacent_attention(const LatentStack& stack, const AttentionParams& params);
LatentStack trajectory_attention(const LatentStack& stack, const ViewRing& ring, const AttentionParams& params);
Tensor score_map(const LatentStack& stack, const Tensor& text_emb, const ScoreMapper& mapper);  // [f,1,H,W]
LatentStack air_attention(const LatentStack& stack, const Tensor& scores, const AirConfig& cfg,
                          const AttentionParams& params);

// Key slots per query pixel for trajectory attention: 9 from the previous
// view's window, 9 from the pixel's own neighbourhood, 9 from the next
// view's window. Entries are flat token ids (view * H*W + row * W + col) or
// -1 for slots emptied by clipping. Size views * H*W * 27.
inline constexpr std::size_t kTrajectorySlots = 27;
IndexPtr trajectory_key_slots(const ViewRing& ring);

namespace ag {

// q[B,n,d], k[B,m,d], v[B,m,dv]; mask (B*n*m entries, 0 = excluded) optional.
Var sdpa(Var q, Var k, Var v, MaskPtr mask = nullptr);

// Projects, splits heads, attends, merges heads and applies W_O.
// q_in[B,n,C], kv_in[B,m,C].
Var multi_head_attention(Var q_in, Var kv_in, const AttentionVars& p, MaskPtr mask = nullptr);

// tokens[f, H*W, C] in, same shape out.
Var adjacent_attention(Var tokens, const AttentionVars& p);
Var trajectory_attention(Var tokens, const ViewRing& ring, const AttentionVars& p);
// -> scores [f, H*W]
Var score_map(Var tokens, Var text_emb, const ScoreMapperVars& m);
Var air_attention(Var tokens, Var scores, const AirConfig& cfg, const AttentionVars& p, std::size_t height,
                  std::size_t width);

}  // namespace ag

}  // namespace mvd
