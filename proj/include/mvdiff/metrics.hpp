// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Image-space evaluation: latent decoding, cross-view consistency against
// ground-truth correspondences, PSNR and binary PPM output.

#pragma once

#include <filesystem>
#include <vector>

#include "mvdiff/synthetic.hpp"
#include "mvdiff/tensor.hpp"

namespace mvd {

// [f, 3, h, w] latents in [-1, 1] -> f images [h*factor, w*factor, 3]:
// (z + 1) / 2, bilinear upsampling, clamp to [0, 1].
std::vector<Tensor> decode_latents(const Tensor& z, std::size_t factor = 4);

// Correspondences view i -> i+1 (forward) or view i+1 -> i (reverse) for
// every i on the ring.
std::vector<Correspondence> ring_correspondences(const RenderedSet& set, bool reverse = false);

// Mean RGB L2 distance between each valid source pixel of `from` and its
// target pixel in `to`. Returns -1 when no pixel is valid.
double pair_consistency(const Tensor& from, const Tensor& to, const Correspondence& c);

// Average of pair_consistency over adjacent ring pairs (forward: i -> i+1,
// reverse: i+1 -> i), skipping pairs without valid points. Throws DomainError
// when no pair has any.
double consistency_metric(const std::vector<Tensor>& images, const std::vector<Correspondence>& pairs,
                          bool reverse = false);

// 10 log10(1 / MSE), 99 dB when MSE < 1e-10.
inline constexpr double kPsnrCap = 99.0;
double psnr(const Tensor& a, const Tensor& b);
double psnr(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

// Binary P6, channels rounded from [0, 1] to 0..255.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace mvd
