// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/view_geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mvdiff/errors.hpp"

namespace mvd {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

ViewRing ViewRing::uniform(int views, int width, int height, double elevation_deg, double distance) {
    ViewRing ring;
    ring.views = views;
    ring.elevation_deg = elevation_deg;
    ring.distance = distance;
    ring.width = width;
    ring.height = height;
    ring.azimuths_deg.resize(views > 0 ? views : 0);
    for (int i = 0; i < views; ++i) ring.azimuths_deg[i] = 360.0 * i / views;
    ring.validate();
    return ring;
}

ViewRing ViewRing::with_resolution(int w, int h) const {
    ViewRing r = *this;
    r.width = w;
    r.height = h;
    r.validate();
    return r;
}

void ViewRing::validate() const {
    if (views < 1) throw DomainError("ViewRing: need at least one view");
    if (static_cast<int>(azimuths_deg.size()) != views) throw DomainError("ViewRing: azimuth count != views");
    if (width < 1 || height < 1) throw DomainError("ViewRing: extents must be >= 1");
    for (double a : azimuths_deg) {
        if (!std::isfinite(a)) throw DomainError("ViewRing: non-finite azimuth");
    }
}

double delta_azimuth(const ViewRing& ring, int i, int j) {
    if (i < 0 || j < 0 || i >= ring.views || j >= ring.views) {
        throw DomainError("delta_azimuth: view index out of range (" + std::to_string(i) + ", " +
                          std::to_string(j) + ") for " + std::to_string(ring.views) + " views");
    }
    double d = std::fmod(ring.azimuths_deg[j] - ring.azimuths_deg[i], 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

// Kept out of line: fusing the cosine here with the sine below into one
// sincos call changes the last bit and breaks the exact d = 0 reduction.
[[gnu::noinline]] double project_rotated_x_simplified(double x, double delta_deg, double width) {
    const double half = width / 2.0;
    return (x - half) * std::cos(radians(delta_deg)) + half;
}

double project_rotated_x(double x, double delta_deg, double depth, double width) {
    return project_rotated_x_simplified(x, delta_deg, width) - depth * std::sin(radians(delta_deg));
}

int round_half_away(double v) { return static_cast<int>(std::round(v)); }

int trajectory_center_col(int x, double delta_deg, int width) {
    const double centre = static_cast<double>(x) + 0.5;
    return round_half_away(project_rotated_x_simplified(centre, delta_deg, width) - 0.5);
}

std::vector<Pixel> trajectory_window(int x, int y, double delta_deg, int width, int height) {
    if (x < 0 || y < 0 || x >= width || y >= height) throw DomainError("trajectory_window: pixel out of bounds");
    const int cx = trajectory_center_col(x, delta_deg, width);
    std::vector<Pixel> out;
    out.reserve(9);
    for (int dy = -1; dy <= 1; ++dy) {
        const int r = y + dy;
        if (r < 0 || r >= height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
            const int c = cx + dx;
            if (c < 0 || c >= width) continue;
            out.push_back({c, r});
        }
    }
    return out;
}

}  // namespace mvd
