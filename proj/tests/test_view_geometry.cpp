// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mvdiff/errors.hpp"
#include "mvdiff/view_geometry.hpp"

using namespace mvd;

namespace {

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

TEST(ViewRing, UniformAzimuths) {
    ViewRing r = ViewRing::uniform(12, 32, 32);
    for (int i = 0; i < 12; ++i) EXPECT_EQ(r.azimuths_deg[i], 30.0 * i);
    EXPECT_EQ(r.distance, 2.0);
    EXPECT_THROW(ViewRing::uniform(0, 32, 32), DomainError);
    EXPECT_THROW(ViewRing::uniform(4, 0, 32), DomainError);
}

TEST(DeltaAzimuth, TwelveViewRing) {
    ViewRing r = ViewRing::uniform(12, 32, 32);
    EXPECT_DOUBLE_EQ(delta_azimuth(r, 0, 1), 30.0);
    EXPECT_DOUBLE_EQ(delta_azimuth(r, 11, 0), 30.0);
    EXPECT_DOUBLE_EQ(delta_azimuth(r, 0, 6), 180.0);
    EXPECT_DOUBLE_EQ(delta_azimuth(r, 6, 0), 180.0);
    EXPECT_DOUBLE_EQ(delta_azimuth(r, 1, 0), -30.0);
    EXPECT_THROW(delta_azimuth(r, 0, 12), DomainError);
    EXPECT_THROW(delta_azimuth(r, -1, 0), DomainError);
}

TEST(DeltaAzimuth, RangeProperty) {
    for (int f : {2, 3, 5, 12, 17}) {
        ViewRing r = ViewRing::uniform(f, 8, 8);
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) {
                const double d = delta_azimuth(r, i, j);
                EXPECT_GT(d, -180.0);
                EXPECT_LE(d, 180.0);
            }
    }
}

TEST(ProjectRotated, FixedPointsAndIdentity) {
    for (double a : {-170.0, -30.0, 0.0, 45.0, 90.0}) EXPECT_DOUBLE_EQ(project_rotated_x(16.0, a, 0.0, 32.0), 16.0);
    EXPECT_EQ(project_rotated_x(7.25, 0.0, 0.0, 32.0), 7.25);
    EXPECT_EQ(project_rotated_x_simplified(7.25, 0.0, 32.0), 7.25);
    EXPECT_DOUBLE_EQ(project_rotated_x_simplified(16.0, 63.0, 32.0), 16.0);
}

TEST(ProjectRotated, HandEvaluation) {
    const double full = 8.0 * std::cos(deg(30)) + 16.0 - 2.0 * std::sin(deg(30));
    const double simple = 8.0 * std::cos(deg(30)) + 16.0;
    EXPECT_NEAR(project_rotated_x(24.0, 30.0, 2.0, 32.0), full, 1e-12);
    EXPECT_NEAR(project_rotated_x(24.0, 30.0, 2.0, 32.0), 21.9282, 1e-4);
    EXPECT_NEAR(project_rotated_x_simplified(24.0, 30.0, 32.0), simple, 1e-12);
    EXPECT_NEAR(project_rotated_x_simplified(24.0, 30.0, 32.0), 22.9282, 1e-4);
}

TEST(ProjectRotated, ZeroDepthReducesExactly) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> x(-10, 50), a(-180, 180);
    for (int k = 0; k < 1000; ++k) {
        const double xv = x(rng), av = a(rng);
        EXPECT_EQ(project_rotated_x(xv, av, 0.0, 32.0), project_rotated_x_simplified(xv, av, 32.0));
    }
}

TEST(ProjectRotated, GapEqualsDepthTerm) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> x(0, 32), a(-180, 180), d(-20, 20);
    for (int k = 0; k < 1000; ++k) {
        const double xv = x(rng), av = a(rng), dv = d(rng);
        const double gap = std::abs(project_rotated_x(xv, av, dv, 32.0) - project_rotated_x_simplified(xv, av, 32.0));
        EXPECT_NEAR(gap, std::abs(dv * std::sin(deg(av))), 1e-12);
    }
}

TEST(TrajectoryWindow, IdentityRotationInterior) {
    auto w = trajectory_window(5, 5, 0.0, 32, 32);
    ASSERT_EQ(w.size(), 9u);
    EXPECT_EQ(w.front(), (Pixel{4, 4}));
    EXPECT_EQ(w[4], (Pixel{5, 5}));
    EXPECT_EQ(w.back(), (Pixel{6, 6}));
}

TEST(TrajectoryWindow, CornerClipping) {
    auto w = trajectory_window(0, 0, 0.0, 32, 32);
    ASSERT_EQ(w.size(), 4u);
    EXPECT_EQ(w, (std::vector<Pixel>{{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
}

TEST(TrajectoryWindow, ThirtyDegreeCase) {
    EXPECT_EQ(trajectory_center_col(24, 30.0, 32), 23);
    auto w = trajectory_window(24, 7, 30.0, 32, 32);
    ASSERT_EQ(w.size(), 9u);
    for (const Pixel& p : w) {
        EXPECT_GE(p.col, 22);
        EXPECT_LE(p.col, 24);
        EXPECT_GE(p.row, 6);
        EXPECT_LE(p.row, 8);
    }
}

TEST(TrajectoryWindow, SizeBoundsAndOutOfRange) {
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y)
            for (double a : {-150.0, -30.0, 0.0, 30.0, 90.0, 180.0}) {
                const auto w = trajectory_window(x, y, a, 8, 8);
                EXPECT_GE(w.size(), 4u);
                EXPECT_LE(w.size(), 9u);
            }
    EXPECT_THROW(trajectory_window(8, 0, 0.0, 8, 8), DomainError);
}

TEST(TrajectoryWindow, MirrorSymmetryUnderNegatedRotation) {
    const int width = 32;
    for (int x = 0; x < width; ++x)
        for (double a : {15.0, 30.0, 60.0, 120.0}) {
            const double v = project_rotated_x_simplified(x + 0.5, a, width) - 0.5;
            if (std::abs(v - std::floor(v) - 0.5) < 1e-9) continue;  // rounding tie
            const int c = trajectory_center_col(x, a, width);
            const int cm = trajectory_center_col(width - 1 - x, -a, width);
            EXPECT_EQ(cm, width - 1 - c) << "x=" << x << " a=" << a;
        }
}
