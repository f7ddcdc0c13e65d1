// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "mvdiff/errors.hpp"
#include "mvdiff/metrics.hpp"

using namespace mvd;
namespace fs = std::filesystem;

namespace {

Correspondence identity_map(int w, int h) {
    Correspondence c;
    c.width = w;
    c.height = h;
    c.status.assign(static_cast<std::size_t>(w * h), Match::Valid);
    for (int r = 0; r < h; ++r)
        for (int x = 0; x < w; ++x) c.target.push_back(Pixel{x, r});
    return c;
}

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    Tensor t({h, w, 3});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST(Consistency, IdenticalViewsScoreZero) {
    const Tensor img = random_image(8, 8, 1);
    const std::vector<Tensor> views(4, img);
    const std::vector<Correspondence> pairs(4, identity_map(8, 8));
    EXPECT_EQ(consistency_metric(views, pairs), 0.0);
}

TEST(Consistency, ConstantOffsetClosedForm) {
    const double c = 0.05;
    const Tensor a = random_image(8, 8, 2);
    Tensor b = a;
    for (auto& v : b.data()) v += c;
    const std::vector<Correspondence> pairs(2, identity_map(8, 8));
    EXPECT_NEAR(consistency_metric({a, b}, pairs), c * std::sqrt(3.0), 1e-14);
}

TEST(Consistency, OnlyValidPixelsCount) {
    Tensor a({2, 2, 3}, 0.0), b({2, 2, 3}, 0.0);
    for (std::size_t k = 0; k < 3; ++k) b[3 + k] = 1.0;  // pixel (0, 1) differs
    Correspondence c = identity_map(2, 2);
    EXPECT_NEAR(pair_consistency(a, b, c), std::sqrt(3.0) / 4.0, 1e-15);
    c.status[1] = Match::Occluded;
    EXPECT_EQ(pair_consistency(a, b, c), 0.0);
    c.status.assign(4, Match::Background);
    EXPECT_EQ(pair_consistency(a, b, c), -1.0);
    EXPECT_THROW(consistency_metric({a, b}, {c, c}), DomainError);
    EXPECT_THROW(consistency_metric({a, b}, {c}), DimensionError);
}

TEST(Consistency, GroundTruthRendersNearlySelfConsistent) {
    const auto set = render_views(make_scene(0), ViewRing::uniform(12, 32, 32));
    EXPECT_LE(consistency_metric(set.images, ring_correspondences(set)), 0.02);
}

TEST(Consistency, SymmetricInPairOrder) {
    for (std::uint64_t seed : {0u, 1u, 2u, 3u, 4u}) {
        const auto set = render_views(make_scene(seed), ViewRing::uniform(12, 32, 32));
        const double fwd = consistency_metric(set.images, ring_correspondences(set));
        const double rev = consistency_metric(set.images, ring_correspondences(set, true), true);
        EXPECT_NEAR(fwd, rev, 0.005) << "seed " << seed;
    }
}

TEST(Consistency, PenalisesViewShuffles) {
    const auto set = render_views(make_scene(0), ViewRing::uniform(12, 32, 32));
    std::vector<Tensor> shuffled = set.images;
    std::swap(shuffled[0], shuffled[6]);
    const auto pairs = ring_correspondences(set);
    EXPECT_GT(consistency_metric(shuffled, pairs), consistency_metric(set.images, pairs));
}

TEST(Psnr, CapAndClosedForms) {
    const Tensor a = random_image(4, 4, 3);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    Tensor b = a;
    for (auto& v : b.data()) v += 0.1;  // MSE 0.01
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);

    Tensor checker({4, 4, 3}), inverse({4, 4, 3});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = (x + y) % 2 == 0 ? 1.0 : 0.0;
                checker[(y * 4 + x) * 3 + c] = v;
                inverse[(y * 4 + x) * 3 + c] = 1.0 - v;
            }
    EXPECT_EQ(psnr(checker, inverse), 0.0);
    EXPECT_THROW(psnr(a, Tensor({4, 5, 3})), DimensionError);
    EXPECT_THROW(psnr(std::vector<Tensor>{a}, std::vector<Tensor>{a, a}), DimensionError);
}

TEST(DecodeLatents, RangeAndShape) {
    Tensor z({2, 3, 2, 2}, 0.0);
    z[0] = -1.0;
    z[1] = 1.0;
    z[2] = 3.0;
    const auto imgs = decode_latents(z, 4);
    ASSERT_EQ(imgs.size(), 2u);
    EXPECT_EQ(imgs[0].shape(), (Shape{8, 8, 3}));
    for (const auto& img : imgs)
        for (double v : img.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    // Constant latent decodes to the constant.
    for (double v : imgs[1].data()) EXPECT_EQ(v, 0.5);
    EXPECT_EQ(imgs[0][0], 0.0);  // corner sample sits on latent (0, 0)
}

TEST(DecodeLatents, InvertsEncodingOfFlatImages) {
    RenderedSet set;
    set.ring = ViewRing::uniform(1, 8, 8);
    set.images.emplace_back(Shape{8, 8, 3}, 0.3);
    const auto back = decode_latents(encode_latents(set));
    EXPECT_LE(max_abs_diff(back[0], set.images[0]), 1e-15);
}

TEST(Ppm, HeaderAndRoundTrip) {
    const fs::path p = fs::temp_directory_path() / "mvdiff_test_image.ppm";
    const Tensor img = random_image(3, 5, 4);
    write_ppm(p, img);
    std::ifstream is(p, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const std::string header = "P6\n5 3\n255\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    EXPECT_EQ(bytes.size(), header.size() + 45);
    const Tensor back = read_ppm(p);
    EXPECT_LE(max_abs_diff(back, img), 0.5 / 255.0 + 1e-12);
    fs::remove(p);
    EXPECT_THROW(write_ppm(p, Tensor({3, 5})), DimensionError);
}
