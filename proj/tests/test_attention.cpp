// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mvdiff/attention.hpp"
#include "mvdiff/errors.hpp"

using namespace mvd;

namespace {

using Row = std::vector<double>;

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

LatentStack random_stack(std::size_t f, std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    return LatentStack(random_tensor({f, c, h, w}, rng),
                       ViewRing::uniform(static_cast<int>(f), static_cast<int>(w), static_cast<int>(h)));
}

// Feature vector of view v at (row, col).
Row pixel(const Tensor& feats, std::size_t v, std::size_t r, std::size_t col) {
    const std::size_t c = feats.dim(1);
    Row out(c);
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] = feats.at({v, ch, r, col});
    return out;
}

Row project(const Row& x, const Tensor& w) {
    Row out(w.dim(1), 0.0);
    for (std::size_t j = 0; j < w.dim(1); ++j)
        for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w.at({i, j});
    return out;
}

// Single-query multi-head attention with explicit loops.
Row attend_naive(const Row& x, const std::vector<Row>& keys_in, const AttentionParams& p) {
    const Row q = project(x, p.wq);
    std::vector<Row> k, v;
    for (const Row& kin : keys_in) {
        k.push_back(project(kin, p.wk));
        v.push_back(project(kin, p.wv));
    }
    const std::size_t c = q.size(), h = static_cast<std::size_t>(p.heads), dh = c / h;
    Row merged(c, 0.0);
    for (std::size_t head = 0; head < h; ++head) {
        std::vector<double> logits(k.size());
        double mx = -1e300;
        for (std::size_t j = 0; j < k.size(); ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d) s += q[head * dh + d] * k[j][head * dh + d];
            logits[j] = s / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < k.size(); ++j)
            for (std::size_t d = 0; d < dh; ++d) merged[head * dh + d] += logits[j] / z * v[j][head * dh + d];
    }
    return project(merged, p.wo);
}

double max_diff_at(const Tensor& out, std::size_t v, std::size_t r, std::size_t col, const Row& expect) {
    double m = 0.0;
    for (std::size_t ch = 0; ch < expect.size(); ++ch) m = std::max(m, std::abs(out.at({v, ch, r, col}) - expect[ch]));
    return m;
}

LatentStack rotate_views(const LatentStack& s, std::size_t k) {
    Tensor out(s.features.shape());
    const std::size_t f = s.views(), per = s.features.size() / f;
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t i = 0; i < per; ++i) out[((v + k) % f) * per + i] = s.features[v * per + i];
    return LatentStack(out, s.ring);
}

}  // namespace

TEST(Sdpa, SingleKeyReturnsValue) {
    std::mt19937_64 rng(1);
    Tensor q = random_tensor({4, 3}, rng), k = random_tensor({1, 3}, rng), v = random_tensor({1, 5}, rng);
    Tensor out = sdpa(q, k, v);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(out.at({i, j}), v[j], 1e-15);
}

TEST(Sdpa, ZeroQueryGivesColumnMean) {
    std::mt19937_64 rng(2);
    Tensor k = random_tensor({6, 3}, rng), v = random_tensor({6, 2}, rng);
    Tensor out = sdpa(Tensor({2, 3}), k, v);
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 6; ++i) mean += v.at({i, j});
        EXPECT_NEAR(out.at({0, j}), mean / 6.0, 1e-15);
    }
}

TEST(Sdpa, TwoKeyClosedForm) {
    Tensor out = sdpa(Tensor({1, 2}, {1, 0}), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2, 2}, {1, 0, 0, 1}));
    const double a = std::exp(1.0 / std::sqrt(2.0));
    EXPECT_NEAR(out[0], a / (a + 1.0), 1e-15);
    EXPECT_NEAR(out[1], 1.0 / (a + 1.0), 1e-15);
}

TEST(Sdpa, DuplicateKeyInvariance) {
    std::mt19937_64 rng(3);
    Tensor q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng), v = random_tensor({5, 4}, rng);
    for (std::size_t rep : {2u, 3u, 7u}) {
        Tensor kk({5 * rep, 4}), vv({5 * rep, 4});
        for (std::size_t r = 0; r < rep; ++r)
            for (std::size_t i = 0; i < 20; ++i) {
                kk[r * 20 + i] = k[i];
                vv[r * 20 + i] = v[i];
            }
        EXPECT_LE(max_abs_diff(sdpa(q, kk, vv), sdpa(q, k, v)), 1e-12);
    }
}

TEST(Sdpa, ShapeMismatch) {
    EXPECT_THROW(sdpa(Tensor({2, 3}), Tensor({2, 4}), Tensor({2, 4})), DimensionError);
}

TEST(AdjacentAttention, IdenticalViewsEqualSelfAttention) {
    std::mt19937_64 rng(4);
    Tensor one = random_tensor({1, 4, 2, 3}, rng);
    const std::size_t f = 5;
    Tensor feats({f, 4, 2, 3});
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t i = 0; i < one.size(); ++i) feats[v * one.size() + i] = one[i];
    AttentionParams p = AttentionParams::random(4, rng, 2);
    LatentStack out = adjacent_attention(LatentStack(feats, ViewRing::uniform(5, 3, 2)), p);
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 3; ++c) {
                std::vector<Row> keys;
                for (std::size_t rr = 0; rr < 2; ++rr)
                    for (std::size_t cc = 0; cc < 3; ++cc) keys.push_back(pixel(one, 0, rr, cc));
                EXPECT_LE(max_diff_at(out.features, v, r, c, attend_naive(pixel(one, 0, r, c), keys, p)), 1e-12);
            }
}

TEST(AdjacentAttention, SingleViewIsSelfAttention) {
    std::mt19937_64 rng(5);
    LatentStack s = random_stack(1, 4, 2, 2, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    LatentStack out = adjacent_attention(s, p);
    std::vector<Row> keys;
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) keys.push_back(pixel(s.features, 0, r, c));
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            EXPECT_LE(max_diff_at(out.features, 0, r, c, attend_naive(pixel(s.features, 0, r, c), keys, p)), 1e-12);
}

TEST(AdjacentAttention, MatchesConcatAndAttendOracle) {
    std::mt19937_64 rng(6);
    const std::size_t f = 4;
    LatentStack s = random_stack(f, 4, 2, 2, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    LatentStack out = adjacent_attention(s, p);
    for (std::size_t v = 0; v < f; ++v) {
        std::vector<Row> keys;
        for (std::size_t nb : {(v + f - 1) % f, v, (v + 1) % f})
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t c = 0; c < 2; ++c) keys.push_back(pixel(s.features, nb, r, c));
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c)
                EXPECT_LE(max_diff_at(out.features, v, r, c, attend_naive(pixel(s.features, v, r, c), keys, p)), 1e-10);
    }
}

TEST(AdjacentAttention, CyclicEquivariance) {
    std::mt19937_64 rng(7);
    LatentStack s = random_stack(5, 4, 2, 2, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    EXPECT_EQ(adjacent_attention(rotate_views(s, 2), p).features, rotate_views(adjacent_attention(s, p), 2).features);
}

TEST(AdjacentAttention, ChannelMismatch) {
    std::mt19937_64 rng(8);
    LatentStack s = random_stack(2, 4, 2, 2, rng);
    EXPECT_THROW(adjacent_attention(s, AttentionParams::identity(3)), DimensionError);
}

TEST(TrajectoryAttention, MatchesGatherAndAttendOracle) {
    std::mt19937_64 rng(9);
    const int f = 4, hw = 8;
    LatentStack s = random_stack(f, 4, hw, hw, rng);
    AttentionParams p = AttentionParams::random(4, rng, 2);
    LatentStack out = trajectory_attention(s, s.ring, p);
    double worst = 0.0;
    for (int v = 0; v < f; ++v) {
        const int prev = (v + f - 1) % f, next = (v + 1) % f;
        const double dprev = s.ring.azimuths_deg[prev] - s.ring.azimuths_deg[v];
        const double dnext = s.ring.azimuths_deg[next] - s.ring.azimuths_deg[v];
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                std::vector<Row> keys;
                auto add = [&](int view, double delta) {
                    // wrap into (-180, 180]
                    while (delta > 180.0) delta -= 360.0;
                    while (delta <= -180.0) delta += 360.0;
                    const double xc = (x + 0.5 - hw / 2.0) * std::cos(delta * M_PI / 180.0) + hw / 2.0 - 0.5;
                    const int cx = static_cast<int>(std::round(xc));
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int r = y + dy, c = cx + dx;
                            if (r < 0 || r >= hw || c < 0 || c >= hw) continue;
                            keys.push_back(pixel(s.features, static_cast<std::size_t>(view), static_cast<std::size_t>(r),
                                                 static_cast<std::size_t>(c)));
                        }
                };
                add(prev, dprev);
                add(v, 0.0);
                add(next, dnext);
                const Row expect = attend_naive(
                    pixel(s.features, static_cast<std::size_t>(v), static_cast<std::size_t>(y), static_cast<std::size_t>(x)),
                    keys, p);
                worst = std::max(worst, max_diff_at(out.features, static_cast<std::size_t>(v),
                                                    static_cast<std::size_t>(y), static_cast<std::size_t>(x), expect));
            }
    }
    EXPECT_LE(worst, 1e-10);
}

TEST(TrajectoryAttention, UniformFeaturesPassThroughValue) {
    const std::size_t f = 3;
    Tensor feats({f, 2, 4, 4});
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t i = 0; i < 16; ++i) {
            feats[(v * 2 + 0) * 16 + i] = 0.3;
            feats[(v * 2 + 1) * 16 + i] = -0.8;
        }
    LatentStack s(feats, ViewRing::uniform(3, 4, 4));
    AttentionParams p = AttentionParams::identity(2);
    LatentStack out = trajectory_attention(s, s.ring, p);
    EXPECT_LE(max_abs_diff(out.features, feats), 1e-15);
}

TEST(TrajectoryAttention, CoLocatedRingEqualsSingleWindow) {
    std::mt19937_64 rng(10);
    LatentStack s = random_stack(1, 4, 5, 5, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    LatentStack out = trajectory_attention(s, s.ring, p);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            std::vector<Row> keys;
            for (const Pixel& px : trajectory_window(x, y, 0.0, 5, 5))
                keys.push_back(pixel(s.features, 0, static_cast<std::size_t>(px.row), static_cast<std::size_t>(px.col)));
            const Row expect = attend_naive(pixel(s.features, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)), keys, p);
            EXPECT_LE(max_diff_at(out.features, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x), expect), 1e-12);
        }
}

TEST(TrajectoryAttention, CyclicEquivariance) {
    std::mt19937_64 rng(11);
    LatentStack s = random_stack(4, 4, 4, 4, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    EXPECT_EQ(trajectory_attention(rotate_views(s, 1), s.ring, p).features,
              rotate_views(trajectory_attention(s, s.ring, p), 1).features);
}

TEST(TrajectoryAttention, RingResolutionMustMatch) {
    std::mt19937_64 rng(12);
    LatentStack s = random_stack(2, 4, 4, 4, rng);
    EXPECT_THROW(trajectory_attention(s, s.ring.with_resolution(8, 8), AttentionParams::identity(4)), DimensionError);
}

TEST(TrajectoryKeySlots, GroupsAndPadding) {
    ViewRing ring = ViewRing::uniform(4, 8, 8);
    IndexPtr slots = trajectory_key_slots(ring);
    ASSERT_EQ(slots->size(), 4u * 64 * kTrajectorySlots);
    // corner pixel of view 0: own group has 4 valid slots
    int valid = 0;
    for (std::size_t s = 9; s < 18; ++s) valid += (*slots)[s] >= 0;
    EXPECT_EQ(valid, 4);
    // previous view of view 0 is view 3
    EXPECT_EQ((*slots)[0] / 64, 3);
}

TEST(ScoreMap, ZeroWeightsGiveHalf) {
    std::mt19937_64 rng(13);
    LatentStack s = random_stack(3, 4, 2, 2, rng);
    Tensor scores = score_map(s, random_tensor({6}, rng), ScoreMapper::zeros(4, 6, 8));
    ASSERT_EQ(scores.shape(), (Shape{3, 1, 2, 2}));
    for (double v : scores.data()) EXPECT_EQ(v, 0.5);
}

TEST(ScoreMap, StrictlyInsideUnitInterval) {
    std::mt19937_64 rng(14);
    LatentStack s = random_stack(3, 4, 4, 4, rng);
    for (auto& v : s.features.data()) v *= 5.0;
    Tensor scores = score_map(s, random_tensor({6}, rng), ScoreMapper::random(4, 6, 8, rng));
    for (double v : scores.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(ScoreMap, TextChangesScores) {
    std::mt19937_64 rng(15);
    LatentStack s = random_stack(2, 4, 2, 2, rng);
    ScoreMapper m = ScoreMapper::random(4, 6, 8, rng);
    Tensor t1 = random_tensor({6}, rng), t2 = random_tensor({6}, rng);
    Tensor a = score_map(s, t1, m), b = score_map(s, t2, m);
    EXPECT_GT(max_abs_diff(a, b), 1e-6);
    // forward oracle for one position
    Row in = pixel(s.features, 1, 1, 0);
    for (double v : t1.data()) in.push_back(v);
    Row hidden = project(in, m.w1);
    for (std::size_t j = 0; j < hidden.size(); ++j) {
        const double z = hidden[j] + m.b1[j];
        hidden[j] = z / (1.0 + std::exp(-z));
    }
    const double logit = project(hidden, m.w2)[0] + m.b2[0];
    EXPECT_NEAR(a.at({1, 0, 1, 0}), 1.0 / (1.0 + std::exp(-logit)), 1e-14);
    EXPECT_THROW(score_map(s, Tensor({5}), m), DimensionError);
}

TEST(AirAttention, UnitScoresUnitStridesEqualDenseAllViewAttention) {
    std::mt19937_64 rng(16);
    const std::size_t f = 3, hw = 4;
    LatentStack s = random_stack(f, 4, hw, hw, rng);
    AttentionParams p = AttentionParams::random(4, rng);
    LatentStack out = air_attention(s, Tensor({f, 1, hw, hw}, 1.0), AirConfig{1, 1}, p);
    std::vector<Row> keys;
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t c = 0; c < hw; ++c) keys.push_back(pixel(s.features, v, r, c));
    for (std::size_t v = 0; v < f; ++v)
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t c = 0; c < hw; ++c)
                EXPECT_LE(max_diff_at(out.features, v, r, c, attend_naive(pixel(s.features, v, r, c), keys, p)), 1e-10);
}

TEST(AirAttention, ZeroScoresGiveZeroOutput) {
    std::mt19937_64 rng(17);
    LatentStack s = random_stack(2, 4, 8, 8, rng);
    LatentStack out = air_attention(s, Tensor({2, 1, 8, 8}), AirConfig{}, AttentionParams::random(4, rng));
    for (double v : out.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(AirAttention, MatchesStepCompositionOracle) {
    std::mt19937_64 rng(18);
    const std::size_t f = 4, hw = 8, c = 4, tau = 2, rho = 4;
    LatentStack s = random_stack(f, c, hw, hw, rng);
    Tensor scores({f, 1, hw, hw});
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (auto& v : scores.data()) v = u(rng);
    AttentionParams p = AttentionParams::random(c, rng);
    LatentStack out = air_attention(s, scores, AirConfig{tau, rho}, p);

    // 1. scale projected maps, 2. pool, 3. attend over all views, 4. upsample, 5. W_O
    auto scaled_pooled = [&](const Tensor& w, std::size_t stride) {
        const std::size_t ho = hw / stride;
        std::vector<std::vector<Row>> grid(f, std::vector<Row>(ho * ho, Row(c, 0.0)));
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t r = 0; r < hw; ++r)
                for (std::size_t col = 0; col < hw; ++col) {
                    const Row pr = project(pixel(s.features, v, r, col), w);
                    const double sc = scores.at({v, 0, r, col});
                    for (std::size_t ch = 0; ch < c; ++ch)
                        grid[v][(r / stride) * ho + col / stride][ch] += sc * pr[ch] / static_cast<double>(stride * stride);
                }
        return grid;
    };
    auto q = scaled_pooled(p.wq, tau), k = scaled_pooled(p.wk, rho), v = scaled_pooled(p.wv, rho);
    const std::size_t hq = hw / tau;
    Tensor coarse({f, c, hq, hq});
    for (std::size_t view = 0; view < f; ++view)
        for (std::size_t i = 0; i < hq * hq; ++i) {
            std::vector<double> logits;
            std::vector<const Row*> vals;
            for (std::size_t kv = 0; kv < f; ++kv)
                for (std::size_t j = 0; j < k[kv].size(); ++j) {
                    double dot = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch) dot += q[view][i][ch] * k[kv][j][ch];
                    logits.push_back(dot / 2.0);
                    vals.push_back(&v[kv][j]);
                }
            double mx = -1e300, z = 0.0;
            for (double l : logits) mx = std::max(mx, l);
            for (double& l : logits) z += (l = std::exp(l - mx));
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t j = 0; j < logits.size(); ++j) acc += logits[j] / z * (*vals[j])[ch];
                coarse.at({view, ch, i / hq, i % hq}) = acc;
            }
        }
    // half-pixel bilinear upsample with edge clamp
    auto sample = [&](std::size_t view, std::size_t ch, double y, double x) {
        auto clampd = [&](double t) { return std::min(std::max(t, 0.0), static_cast<double>(hq - 1)); };
        y = clampd(y);
        x = clampd(x);
        const std::size_t y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
        const std::size_t y1 = std::min(y0 + 1, hq - 1), x1 = std::min(x0 + 1, hq - 1);
        const double wy = y - static_cast<double>(y0), wx = x - static_cast<double>(x0);
        return (1 - wy) * ((1 - wx) * coarse.at({view, ch, y0, x0}) + wx * coarse.at({view, ch, y0, x1})) +
               wy * ((1 - wx) * coarse.at({view, ch, y1, x0}) + wx * coarse.at({view, ch, y1, x1}));
    };
    double worst = 0.0;
    for (std::size_t view = 0; view < f; ++view)
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t col = 0; col < hw; ++col) {
                Row up(c);
                for (std::size_t ch = 0; ch < c; ++ch)
                    up[ch] = sample(view, ch, (static_cast<double>(r) + 0.5) / tau - 0.5,
                                    (static_cast<double>(col) + 0.5) / tau - 0.5);
                worst = std::max(worst, max_diff_at(out.features, view, r, col, project(up, p.wo)));
            }
    EXPECT_LE(worst, 1e-10);
}

TEST(AirAttention, ShapePreservedAcrossStrides) {
    std::mt19937_64 rng(19);
    LatentStack s = random_stack(2, 4, 8, 8, rng);
    Tensor scores({2, 1, 8, 8}, 0.7);
    AttentionParams p = AttentionParams::random(4, rng);
    for (auto [t, r] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {1, 2}, {2, 2}, {2, 4}, {4, 8}, {8, 8}}) {
        EXPECT_EQ(air_attention(s, scores, AirConfig{t, r}, p).features.shape(), s.features.shape());
    }
    EXPECT_THROW(air_attention(s, scores, AirConfig{4, 2}, p), DomainError);
    EXPECT_THROW(air_attention(s, scores, AirConfig{3, 3}, p), DimensionError);
}

// End-to-end gradient checks of each operator with respect to features and
// projections.
TEST(AttentionGrad, AllOperators) {
    std::mt19937_64 rng(20);
    const std::size_t f = 3, c = 4, hw = 4;
    const Tensor feats = random_tensor({f, c, hw, hw}, rng);
    const AttentionParams p = AttentionParams::random(c, rng, 2);
    const ScoreMapper m = ScoreMapper::random(c, 3, 5, rng);
    const Tensor text = random_tensor({3}, rng);
    const ViewRing ring = ViewRing::uniform(3, 4, 4);
    const Tensor probe = random_tensor({f, hw * hw, c}, rng);

    auto loss = [&](Tape& t, Var out) { return ag::sum(ag::mul(out, t.constant(probe))); };
    auto tokens_of = [](Var x) { return ag::to_tokens(x); };

    auto check = [&](const char* name, const ScalarFn& fn, const Tensor& x) {
        GradCheckReport r = grad_check(fn, x, 1e-5, 1e-4);
        EXPECT_TRUE(r.passed) << name << " rel err " << r.max_rel_error;
    };
    check("adjacent", [&](Tape& t, Var x) { return loss(t, ag::adjacent_attention(tokens_of(x), bind_constant(t, p))); },
          feats);
    check("trajectory",
          [&](Tape& t, Var x) { return loss(t, ag::trajectory_attention(tokens_of(x), ring, bind_constant(t, p))); },
          feats);
    check("air",
          [&](Tape& t, Var x) {
              Var tok = tokens_of(x);
              Var s = ag::score_map(tok, t.constant(text), bind_constant(t, m));
              return loss(t, ag::air_attention(tok, s, AirConfig{2, 4}, bind_constant(t, p), hw, hw));
          },
          feats);
    check("wq through trajectory",
          [&](Tape& t, Var w) {
              AttentionVars v = bind_constant(t, p);
              v.wq = w;
              return loss(t, ag::trajectory_attention(tokens_of(t.constant(feats)), ring, v));
          },
          p.wq);
    check("score mapper through air",
          [&](Tape& t, Var w1) {
              ScoreMapperVars mv = bind_constant(t, m);
              mv.w1 = w1;
              Var tok = tokens_of(t.constant(feats));
              Var s = ag::score_map(tok, t.constant(text), mv);
              return loss(t, ag::air_attention(tok, s, AirConfig{2, 2}, bind_constant(t, p), hw, hw));
          },
          m.w1);
}
