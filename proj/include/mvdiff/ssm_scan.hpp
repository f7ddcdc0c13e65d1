// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Selective state space scan over multiview tokens.
//
// Per channel d and state n, with token-dependent step, input and output
// projections:
//   delta_t = softplus(x_t W_delta + b_delta)     [D]
//   B_t     = x_t W_B                             [N]
//   C_t     = x_t W_C                             [N]
//   h_t     = exp(delta_t A) h_{t-1} + delta_t B_t x_t
//   y_t     = sum_n C_t[n] h_t[., n]
// A is diagonal, input independent and strictly negative.
//
// Token orderings: the spiral order starts at the grid centre and walks
// outward; views are stacked block by block, and the second pass of the
// bidirectional scan visits the view blocks in reverse.

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mvdiff/autograd.hpp"
#include "mvdiff/determinism.hpp"
#include "mvdiff/latent_stack.hpp"
#include "mvdiff/tensor.hpp"

namespace mvd {

enum class ScanStrategy {
    SpiralBidirectional,       // spiral per view, second pass reverses view blocks
    SpatialFirstBidirectional, // row-major per view, second pass reverses the whole sequence
    RowMajor,                  // row-major per view, single pass
};

std::string to_string(ScanStrategy s);
ScanStrategy parse_scan_strategy(const std::string& name);

// Sequence position -> row-major cell index. Centre is
// ((H-1)/2, (W-1)/2); walk lengths 1,1,2,2,3,3,... turning right, down,
// left, up; cells outside the grid are skipped.
std::vector<std::size_t> spiral_order(std::size_t height, std::size_t width);

struct ScanOrder {
    std::size_t views = 0, height = 0, width = 0;
    ScanStrategy strategy = ScanStrategy::SpiralBidirectional;
    std::vector<std::size_t> spatial;   // per-view cell order
    std::vector<std::size_t> forward;   // sequence position -> token, first pass
    std::vector<std::size_t> backward;  // sequence position -> token, second pass

    static ScanOrder build(std::size_t views, std::size_t height, std::size_t width,
                           ScanStrategy strategy = ScanStrategy::SpiralBidirectional);

    std::size_t length() const { return forward.size(); }
    const std::vector<std::size_t>& pass(bool reverse_views) const { return reverse_views ? backward : forward; }
    // token -> sequence position
    std::vector<std::size_t> inverse(bool reverse_views) const;
};

// Flattens [f, C, H, W] into a [f*H*W, C] sequence in scan order.
Tensor sbscan_permute(const LatentStack& stack, const ScanOrder& order, bool reverse_views);
// Inverse of sbscan_permute.
Tensor sbscan_unpermute(const Tensor& sequence, const ScanOrder& order, bool reverse_views);

struct SsmParams {
    Tensor a;        // [D, N], entries < 0
    Tensor w_delta;  // [D, D]
    Tensor b_delta;  // [D]
    Tensor w_b;      // [D, N]
    Tensor w_c;      // [D, N]

    static SsmParams random(std::size_t channels, std::size_t state, std::mt19937_64& rng);

    std::size_t channels() const { return a.dim(0); }
    std::size_t state() const { return a.dim(1); }
    void validate() const;
};

struct Discretized {
    Tensor a_bar;
    Tensor b_bar;
};

// a_bar = exp(delta * A), b_bar = delta * B.
Discretized discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta);

struct SelectiveInputs {
    Tensor delta;  // [L, D]
    Tensor b;      // [L, N]
    Tensor c;      // [L, N]
};

// Reference path: plain loops, strictly left to right.
SelectiveInputs selective_projections_reference(const Tensor& x, const SsmParams& p);
Tensor selective_scan_sequential(const Tensor& x, const SsmParams& p);

struct ScanOptions {
    std::size_t chunk = 64;
    // Chunk-size independent arithmetic (bitwise equal to the sequential
    // recurrence). Otherwise chunks are scanned from a zero state and
    // stitched with the associative combine.
    bool deterministic = deterministic_mode();
};

// Production path on the tape primitives with a chunked core.
Tensor selective_scan(const Tensor& x, const SsmParams& p, ScanOptions opt = {});

// Recurrence only, for given discretisation inputs. x/delta [L,D], a [D,N],
// b/c [L,N]; returns y [L,D] and, if requested, h [L,D,N].
Tensor scan_core_sequential(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                            const Tensor& c, Tensor* states = nullptr);
Tensor scan_core_chunked(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                         const ScanOptions& opt, Tensor* states = nullptr);

// Bidirectional scan with residual: x + (scan(forward) + scan(backward)) / 2.
LatentStack rapid_glance(const LatentStack& stack, const SsmParams& p,
                         ScanStrategy strategy = ScanStrategy::SpiralBidirectional, ScanOptions opt = {});

struct SsmVars {
    Var a, w_delta, b_delta, w_b, w_c;
};

SsmVars bind_constant(Tape& tape, const SsmParams& p);

namespace ag {

Var scan_core(Var x, Var delta, Var a, Var b, Var c, const ScanOptions& opt);
Var selective_scan(Var x, const SsmVars& p, const ScanOptions& opt);
// tokens [f, H*W, C]
Var rapid_glance(Var tokens, const ScanOrder& order, const SsmVars& p, const ScanOptions& opt);

}  // namespace ag

}  // namespace mvd
