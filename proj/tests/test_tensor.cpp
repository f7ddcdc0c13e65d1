// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvdiff/errors.hpp"
#include "mvdiff/tensor.hpp"

using namespace mvd;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.at({i, p}) * b.at({p, j});
            c.at({i, j}) = s;
        }
    return c;
}

}  // namespace

TEST(Tensor, RejectsZeroExtentAndSizeMismatch) {
    EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    EXPECT_THROW(Tensor({2, 2}).at({2, 0}), DomainError);
}

TEST(Matmul, IdentityAndZero) {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
    EXPECT_EQ(matmul(eye, a), a);
    EXPECT_EQ(matmul(a, Tensor({3, 3})), Tensor({3, 3}));
}

TEST(Matmul, HandCase) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {1, 1});
    EXPECT_EQ(matmul(a, b), Tensor({2, 1}, {3, 7}));
}

TEST(Matmul, MatchesTripleLoop) {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
    EXPECT_LE(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-14);
}

TEST(Matmul, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Bmm, TransposedVariantsAgree) {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 5, 4}, rng);
    Tensor bt({2, 4, 5});
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 4; ++j) bt.at({q, j, i}) = b.at({q, i, j});
    EXPECT_LE(max_abs_diff(bmm_nt(a, b), bmm(a, bt)), 1e-14);
    Tensor at({2, 4, 3});
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) at.at({q, j, i}) = a.at({q, i, j});
    EXPECT_LE(max_abs_diff(bmm_tn(at, bt), bmm(a, bt)), 1e-14);
}

TEST(Softmax, Symmetric) {
    Tensor s = softmax(Tensor({2}, {0, 0}), -1);
    EXPECT_EQ(s[0], 0.5);
    EXPECT_EQ(s[1], 0.5);
}

TEST(Softmax, StableUnderLargeShift) {
    Tensor s = softmax(Tensor({2}, {1000, 1000}), 0);
    EXPECT_EQ(s[0], 0.5);
    EXPECT_EQ(s[1], 0.5);
}

TEST(Softmax, ClosedForm) {
    Tensor s = softmax(Tensor({2}, {0, std::log(3.0)}), 0);
    EXPECT_NEAR(s[0], 0.25, 1e-15);
    EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneProperty) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor({4, 9}, rng, -50.0, 50.0);
        Tensor s = softmax(x, 1);
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 9; ++c) {
                EXPECT_GE(s.at({r, c}), 0.0);
                sum += s.at({r, c});
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(Softmax, NonLastAxis) {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({3, 2}, rng);
    Tensor s = softmax(x, 0);
    for (std::size_t c = 0; c < 2; ++c) {
        double z = 0.0;
        for (std::size_t r = 0; r < 3; ++r) z += std::exp(x.at({r, c}));
        for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(s.at({r, c}), std::exp(x.at({r, c})) / z, 1e-15);
    }
}

TEST(MaskedSoftmax, MaskedEntriesAreExactlyZero) {
    std::vector<unsigned char> mask{1, 0, 1};
    Tensor s = masked_softmax(Tensor({1, 3}, {0.3, 9.0, 0.3}), mask);
    EXPECT_EQ(s[1], 0.0);
    EXPECT_EQ(s[0], 0.5);
    std::vector<unsigned char> none{0, 0, 0};
    EXPECT_THROW(masked_softmax(Tensor({1, 3}), none), DomainError);
}

TEST(AvgPool, MeanOfAll) {
    Tensor p = avg_pool2d(Tensor({2, 2}, {1, 2, 3, 4}), 2);
    EXPECT_EQ(p.shape(), (Shape{1, 1}));
    EXPECT_EQ(p[0], 2.5);
}

TEST(AvgPool, StrideOneIsIdentity) {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({2, 3, 5, 7}, rng);
    EXPECT_EQ(avg_pool2d(x, 1), x);
}

TEST(AvgPool, RampOracle) {
    Tensor x({4, 4});
    for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
    Tensor p = avg_pool2d(x, 2);
    // per-window mean computed independently
    Tensor expect({2, 2});
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t dr = 0; dr < 2; ++dr)
                for (std::size_t dc = 0; dc < 2; ++dc) s += x.at({2 * r + dr, 2 * c + dc});
            expect.at({r, c}) = s / 4.0;
        }
    EXPECT_EQ(p, expect);
    EXPECT_EQ(p, Tensor({2, 2}, {2.5, 4.5, 10.5, 12.5}));
}

TEST(AvgPool, NonDivisibleThrows) {
    EXPECT_THROW(avg_pool2d(Tensor({3, 4}), 2), DimensionError);
    EXPECT_THROW(avg_pool2d(Tensor({4, 4}), 0), DomainError);
}

TEST(AvgPool, PreservesGlobalMean) {
    std::mt19937_64 rng(7);
    for (std::size_t s : {1u, 2u, 4u}) {
        Tensor x = random_tensor({3, 8, 8}, rng);
        Tensor p = avg_pool2d(x, s);
        double mx = 0.0, mp = 0.0;
        for (double v : x.data()) mx += v;
        for (double v : p.data()) mp += v;
        EXPECT_NEAR(mx / static_cast<double>(x.size()), mp / static_cast<double>(p.size()), 1e-12);
    }
}

TEST(Upsample, ConstantPreserved) {
    Tensor u = bilinear_upsample2d(Tensor({1, 1}, {3.25}), 2);
    EXPECT_EQ(u, Tensor({2, 2}, 3.25));
    Tensor c({2, 3, 4}, -0.7);
    EXPECT_EQ(bilinear_upsample2d(c, 4), Tensor({2, 12, 16}, -0.7));
}

TEST(Upsample, FactorOneIdentityAndBadFactor) {
    std::mt19937_64 rng(8);
    Tensor x = random_tensor({3, 5}, rng);
    EXPECT_EQ(bilinear_upsample2d(x, 1), x);
    EXPECT_THROW(bilinear_upsample2d(x, 0), DomainError);
}

TEST(Upsample, HalfPixelOracle) {
    Tensor u = bilinear_upsample2d(Tensor({1, 2}, {0, 2}), 2);
    ASSERT_EQ(u.shape(), (Shape{2, 4}));
    const double row[4] = {0.0, 0.5, 1.5, 2.0};
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(u.at({r, c}), row[c], 1e-15);
}

TEST(Upsample, GlobalMeanOnLinearRamp) {
    // Interior-dominated: a linear ramp is reproduced except at the clamped
    // edge samples, which are symmetric, so the mean is preserved.
    Tensor x({8, 8});
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) x.at({r, c}) = 0.3 * static_cast<double>(r) - 0.1 * static_cast<double>(c);
    Tensor u = bilinear_upsample2d(x, 2);
    double mx = 0.0, mu = 0.0;
    for (double v : x.data()) mx += v;
    for (double v : u.data()) mu += v;
    EXPECT_NEAR(mx / 64.0, mu / 256.0, 1e-10);
}

TEST(Kernels, FiniteInFiniteOut) {
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({2, 4, 4}, rng, -1e6, 1e6);
    EXPECT_TRUE(softmax(x, -1).all_finite());
    EXPECT_TRUE(avg_pool2d(x, 2).all_finite());
    EXPECT_TRUE(bilinear_upsample2d(x, 3).all_finite());
}
