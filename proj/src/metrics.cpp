// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "mvdiff/errors.hpp"

namespace mvd {

std::vector<Tensor> decode_latents(const Tensor& z, std::size_t factor) {
    if (z.rank() != 4 || z.dim(1) != 3) throw DimensionError("decode_latents: expected [f, 3, h, w], got " + shape_str(z.shape()));
    Tensor unit(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) unit[i] = 0.5 * (z[i] + 1.0);
    const Tensor up = factor == 1 ? unit : bilinear_upsample2d(unit, factor);
    const std::size_t f = up.dim(0), h = up.dim(2), w = up.dim(3);
    std::vector<Tensor> out;
    for (std::size_t v = 0; v < f; ++v) {
        Tensor img({h, w, 3});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < h * w; ++p)
                img[p * 3 + c] = std::clamp(up[(v * 3 + c) * h * w + p], 0.0, 1.0);
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<Correspondence> ring_correspondences(const RenderedSet& set, bool reverse) {
    std::vector<Correspondence> out;
    const int f = set.ring.views;
    for (int i = 0; i < f; ++i) {
        const int j = (i + 1) % f;
        out.push_back(reverse ? ground_truth_correspondence(set, j, i) : ground_truth_correspondence(set, i, j));
    }
    return out;
}

double pair_consistency(const Tensor& from, const Tensor& to, const Correspondence& c) {
    const Shape want{static_cast<std::size_t>(c.height), static_cast<std::size_t>(c.width), 3};
    if (from.shape() != want || to.shape() != want) {
        throw DimensionError("consistency: images must be " + shape_str(want));
    }
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t px = 0; px < c.status.size(); ++px) {
        if (c.status[px] != Match::Valid) continue;
        const auto q = static_cast<std::size_t>(c.target[px].row * c.width + c.target[px].col);
        double d2 = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double d = from[px * 3 + k] - to[q * 3 + k];
            d2 += d * d;
        }
        acc += std::sqrt(d2);
        ++n;
    }
    return n == 0 ? -1.0 : acc / static_cast<double>(n);
}

double consistency_metric(const std::vector<Tensor>& images, const std::vector<Correspondence>& pairs, bool reverse) {
    const std::size_t f = images.size();
    if (pairs.size() != f) throw DimensionError("consistency: need one correspondence per ring pair");
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < f; ++i) {
        const std::size_t j = (i + 1) % f;
        const double m = reverse ? pair_consistency(images[j], images[i], pairs[i])
                                 : pair_consistency(images[i], images[j], pairs[i]);
        if (m < 0.0) continue;
        acc += m;
        ++used;
    }
    if (used == 0) throw DomainError("consistency: no valid correspondences");
    return acc / static_cast<double>(used);
}

double psnr(const Tensor& a, const Tensor& b) { return psnr(std::vector<Tensor>{a}, std::vector<Tensor>{b}); }

double psnr(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("psnr: stacks differ in length");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t v = 0; v < a.size(); ++v) {
        if (a[v].shape() != b[v].shape()) throw DimensionError("psnr: image shapes differ");
        for (std::size_t i = 0; i < a[v].size(); ++i) {
            const double d = a[v][i] - b[v][i];
            se += d * d;
        }
        n += a[v].size();
    }
    const double mse = se / static_cast<double>(n);
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("write_ppm: expected [H, W, 3]");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing", path.string());
    os << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    std::string bytes(image.size(), '\0');
    for (std::size_t i = 0; i < image.size(); ++i) {
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0)));
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string(), path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFileError("cannot open " + path.string(), path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P6" || w == 0 || h == 0 || maxval != 255) {
        throw CorruptPayloadError("not a binary 8-bit PPM: " + path.string(), path.string());
    }
    is.get();
    std::string bytes(w * h * 3, '\0');
    is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw CorruptPayloadError("truncated PPM: " + path.string(), path.string());
    }
    Tensor img({h, w, 3});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    return img;
}

}  // namespace mvd
