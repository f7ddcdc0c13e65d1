// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded box/sphere scenes rendered orthographically on a view ring, with
// exact cross-view pixel correspondences.
//
// Camera for azimuth a, elevation e (world y is up):
//   right   U = ( cos a,        0,     -sin a)
//   up      V = (-sin a sin e,  cos e, -cos a sin e)
//   view    D = ( sin a cos e,  sin e,  cos a cos e)
// A world point P lands at column u*s + W/2, row H/2 - v*s with
// u = P.U, v = P.V and s = W / 1.6 pixels per unit. Its depth is s * P.D
// pixels; the visible surface is the one with the smallest depth. This
// matches the column-shift convention in view_geometry.hpp exactly.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvdiff/tensor.hpp"
#include "mvdiff/view_geometry.hpp"

namespace mvd {

using Vec3 = std::array<double, 3>;

enum class PrimitiveKind { Sphere, Box };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    Vec3 center{};
    Vec3 half_extent{};  // sphere radius in [0]
    Vec3 color{};
    // Solid texture: color * (1 + texture_amp * sin(texture_freq . P + texture_phase)).
    double texture_amp = 0.0;
    Vec3 texture_freq{};
    double texture_phase = 0.0;

    friend bool operator==(const Primitive&, const Primitive&) = default;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    Vec3 background{1.0, 1.0, 1.0};

    // Throws DomainError when a primitive leaves [-0.5, 0.5]^3 or the list is
    // empty.
    void validate() const;
    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

// 1 to 4 primitives inside the unit box.
SceneSpec make_scene(std::uint64_t seed);

inline constexpr double kBackgroundDepth = 1e9;

// Pixels per world unit for an image `width` pixels wide.
double pixels_per_unit(int width);

struct RenderedSet {
    ViewRing ring;
    std::vector<Tensor> images;  // [H, W, 3] in [0, 1]
    std::vector<Tensor> depths;  // [H, W], kBackgroundDepth off the object

    bool foreground(int view, int row, int col) const;
};

RenderedSet render_views(const SceneSpec& scene, const ViewRing& ring);

enum class Match : std::uint8_t { Valid = 0, Background = 1, OutOfView = 2, Occluded = 3 };

struct Correspondence {
    int width = 0;
    int height = 0;
    std::vector<Match> status;  // per source pixel, row-major
    std::vector<Pixel> target;  // meaningful where status == Valid

    std::size_t valid_count() const;
};

// Re-projects every foreground pixel of view i through its 3D surface point
// into view j. The match is marked occluded when the depth view j records at
// the target pixel differs from the point's depth by more than 0.5 pixels.
Correspondence ground_truth_correspondence(const RenderedSet& set, int i, int j);

// [f, H, W, 3] images -> [f, 3, H/stride, W/stride] latents in [-1, 1]
// (average pooling, then 2x - 1).
Tensor encode_latents(const RenderedSet& set, std::size_t stride = 4);

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json + view_%02d.mvt + depth_%02d.mvt.

inline constexpr int kDatasetVersion = 1;

struct Dataset {
    RenderedSet set;
    std::uint64_t seed = 0;
    std::string prompt;
};

void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// Errors: MissingFileError (manifest or tensor file absent), ManifestError
// (unparsable, wrong version, missing fields), ShapeMismatchError (tensor or
// list length disagrees with the manifest), CorruptPayloadError (tensor bytes
// do not decode).
Dataset read_dataset(const std::filesystem::path& dir);

// Fixed prompt describing a scene's dominant primitive, e.g. "a red sphere".
std::string describe_scene(const SceneSpec& scene);

}  // namespace mvd
