// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Camera ring and the rotation-induced column shift between views.
//
// Pixel k spans [k, k+1) with its centre at k + 0.5. Column formulas take
// continuous coordinates; the window helper applies them to pixel centres.
// Depth is signed and measured in pixels, 0 on the plane through the
// rotation axis.

#pragma once

#include <vector>

namespace mvd {

struct ViewRing {
    int views = 0;
    std::vector<double> azimuths_deg;
    double elevation_deg = 0.0;
    double distance = 2.0;
    int width = 0;
    int height = 0;

    // azimuth[i] = i * 360 / views
    static ViewRing uniform(int views, int width, int height, double elevation_deg = 0.0,
                            double distance = 2.0);

    // Same cameras at another resolution (latent grids share the image ring).
    ViewRing with_resolution(int width, int height) const;

    // Throws DomainError when the ring is malformed.
    void validate() const;
};

// Signed minimal difference azimuth[j] - azimuth[i], in (-180, 180].
double delta_azimuth(const ViewRing& ring, int i, int j);

// x' = (x - W/2) cos(da) + W/2 - d sin(da)
double project_rotated_x(double x, double delta_deg, double depth, double width);

// Depth-free form: x' = (x - W/2) cos(da) + W/2
double project_rotated_x_simplified(double x, double delta_deg, double width);

int round_half_away(double v);

struct Pixel {
    int col = 0;
    int row = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Column of the window centre in the rotated view for source pixel column x
// (row is unchanged).
int trajectory_center_col(int x, double delta_deg, int width);

// 3x3 neighbourhood around (trajectory_center_col, y), clipped to the image.
// Row-major order; 4 to 9 pixels.
std::vector<Pixel> trajectory_window(int x, int y, double delta_deg, int width, int height);

}  // namespace mvd
