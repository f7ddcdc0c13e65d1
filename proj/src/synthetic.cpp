// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "mvdiff/errors.hpp"
#include "mvdiff/mvt.hpp"

namespace mvd {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

struct Camera {
    Vec3 u, v, d;
};

Camera camera(double azimuth_deg, double elevation_deg) {
    const double a = azimuth_deg * std::numbers::pi / 180.0;
    const double e = elevation_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a), ce = std::cos(e), se = std::sin(e);
    return Camera{{ca, 0.0, -sa}, {-sa * se, ce, -ca * se}, {sa * ce, se, ca * ce}};
}

Vec3 point_on_ray(const Camera& cam, double u, double v, double d) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = cam.u[k] * u + cam.v[k] * v + cam.d[k] * d;
    return p;
}

// Depth (world units along D) of the first hit, or +inf.
double intersect(const Primitive& prim, const Camera& cam, double u, double v) {
    const double inf = std::numeric_limits<double>::infinity();
    if (prim.kind == PrimitiveKind::Sphere) {
        const double r = prim.half_extent[0];
        const double du = u - dot(prim.center, cam.u);
        const double dv = v - dot(prim.center, cam.v);
        const double disc = r * r - du * du - dv * dv;
        if (disc < 0.0) return inf;
        return dot(prim.center, cam.d) - std::sqrt(disc);
    }
    double tmin = -inf, tmax = inf;
    for (int k = 0; k < 3; ++k) {
        const double o = cam.u[k] * u + cam.v[k] * v;
        const double lo = prim.center[k] - prim.half_extent[k];
        const double hi = prim.center[k] + prim.half_extent[k];
        const double dk = cam.d[k];
        if (std::abs(dk) < 1e-15) {
            if (o < lo || o > hi) return inf;
            continue;
        }
        double t1 = (lo - o) / dk, t2 = (hi - o) / dk;
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    }
    return tmin <= tmax ? tmin : inf;
}

Vec3 shade(const Primitive& prim, const Vec3& p) {
    const double tex = 1.0 + prim.texture_amp * std::sin(dot(prim.texture_freq, p) + prim.texture_phase);
    Vec3 c;
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(prim.color[k] * tex, 0.0, 1.0);
    return c;
}

}  // namespace

void SceneSpec::validate() const {
    if (primitives.empty()) throw DomainError("scene has no primitives");
    for (const auto& p : primitives) {
        for (int k = 0; k < 3; ++k) {
            const double h = p.kind == PrimitiveKind::Sphere ? p.half_extent[0] : p.half_extent[k];
            if (!(h > 0.0)) throw DomainError("primitive extent must be positive");
            if (p.center[k] - h < -0.5 || p.center[k] + h > 0.5) {
                throw DomainError("primitive leaves the unit box");
            }
        }
    }
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
    j = nlohmann::json{{"background", s.background}, {"primitives", nlohmann::json::array()}};
    for (const auto& p : s.primitives) {
        j["primitives"].push_back({{"kind", p.kind == PrimitiveKind::Sphere ? "sphere" : "box"},
                                   {"center", p.center},
                                   {"half_extent", p.half_extent},
                                   {"color", p.color},
                                   {"texture_amp", p.texture_amp},
                                   {"texture_freq", p.texture_freq},
                                   {"texture_phase", p.texture_phase}});
    }
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
    j.at("background").get_to(s.background);
    s.primitives.clear();
    for (const auto& e : j.at("primitives")) {
        Primitive p;
        const auto kind = e.at("kind").get<std::string>();
        if (kind == "sphere") {
            p.kind = PrimitiveKind::Sphere;
        } else if (kind == "box") {
            p.kind = PrimitiveKind::Box;
        } else {
            throw DomainError("unknown primitive kind '" + kind + "'");
        }
        e.at("center").get_to(p.center);
        e.at("half_extent").get_to(p.half_extent);
        e.at("color").get_to(p.color);
        e.at("texture_amp").get_to(p.texture_amp);
        e.at("texture_freq").get_to(p.texture_freq);
        e.at("texture_phase").get_to(p.texture_phase);
        s.primitives.push_back(p);
    }
}

SceneSpec make_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uni = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SceneSpec s;
    s.background = {1.0, 1.0, 1.0};
    const int count = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < count; ++i) {
        Primitive p;
        p.kind = uni(0.0, 1.0) < 0.5 ? PrimitiveKind::Sphere : PrimitiveKind::Box;
        if (p.kind == PrimitiveKind::Sphere) {
            const double r = uni(0.12, 0.3);
            p.half_extent = {r, r, r};
        } else {
            for (auto& h : p.half_extent) h = uni(0.08, 0.3);
        }
        for (int k = 0; k < 3; ++k) {
            const double room = 0.5 - p.half_extent[k];
            p.center[k] = uni(-room, room);
        }
        for (auto& c : p.color) c = uni(0.15, 0.85);
        p.texture_amp = uni(0.0, 0.15);
        for (auto& f : p.texture_freq) f = uni(-5.0, 5.0);
        p.texture_phase = uni(0.0, 2.0 * std::numbers::pi);
        s.primitives.push_back(p);
    }
    s.validate();
    return s;
}

double pixels_per_unit(int width) { return static_cast<double>(width) / 1.6; }

bool RenderedSet::foreground(int view, int row, int col) const {
    return depths.at(static_cast<std::size_t>(view))[static_cast<std::size_t>(row * ring.width + col)] <
           kBackgroundDepth;
}

RenderedSet render_views(const SceneSpec& scene, const ViewRing& ring) {
    ring.validate();
    scene.validate();
    const int w = ring.width, h = ring.height;
    const double s = pixels_per_unit(w);
    RenderedSet out;
    out.ring = ring;
    for (int view = 0; view < ring.views; ++view) {
        const Camera cam = camera(ring.azimuths_deg[static_cast<std::size_t>(view)], ring.elevation_deg);
        Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
        Tensor depth({static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, kBackgroundDepth);
        for (int r = 0; r < h; ++r) {
            const double v = (h / 2.0 - (r + 0.5)) / s;
            for (int c = 0; c < w; ++c) {
                const double u = (c + 0.5 - w / 2.0) / s;
                double best = std::numeric_limits<double>::infinity();
                const Primitive* hit = nullptr;
                for (const auto& p : scene.primitives) {
                    const double d = intersect(p, cam, u, v);
                    if (d < best) {
                        best = d;
                        hit = &p;
                    }
                }
                const std::size_t px = static_cast<std::size_t>(r * w + c);
                Vec3 color = scene.background;
                if (hit != nullptr) {
                    color = shade(*hit, point_on_ray(cam, u, v, best));
                    depth[px] = best * s;
                }
                for (int k = 0; k < 3; ++k) img[px * 3 + static_cast<std::size_t>(k)] = color[static_cast<std::size_t>(k)];
            }
        }
        out.images.push_back(std::move(img));
        out.depths.push_back(std::move(depth));
    }
    return out;
}

std::size_t Correspondence::valid_count() const {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), Match::Valid));
}

Correspondence ground_truth_correspondence(const RenderedSet& set, int i, int j) {
    const ViewRing& ring = set.ring;
    if (i < 0 || j < 0 || i >= ring.views || j >= ring.views) {
        throw DomainError("correspondence: view index out of range");
    }
    const int w = ring.width, h = ring.height;
    const double s = pixels_per_unit(w);
    const Camera ci = camera(ring.azimuths_deg[static_cast<std::size_t>(i)], ring.elevation_deg);
    const Camera cj = camera(ring.azimuths_deg[static_cast<std::size_t>(j)], ring.elevation_deg);
    const Tensor& dj = set.depths[static_cast<std::size_t>(j)];

    Correspondence out;
    out.width = w;
    out.height = h;
    out.status.assign(static_cast<std::size_t>(w * h), Match::Background);
    out.target.assign(static_cast<std::size_t>(w * h), Pixel{});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t px = static_cast<std::size_t>(r * w + c);
            if (!set.foreground(i, r, c)) continue;
            if (i == j) {
                out.status[px] = Match::Valid;
                out.target[px] = Pixel{c, r};
                continue;
            }
            const double u = (c + 0.5 - w / 2.0) / s;
            const double v = (h / 2.0 - (r + 0.5)) / s;
            const Vec3 p = point_on_ray(ci, u, v, set.depths[static_cast<std::size_t>(i)][px] / s);
            const double col = std::floor(dot(p, cj.u) * s + w / 2.0);
            const double row = std::floor(h / 2.0 - dot(p, cj.v) * s);
            if (col < 0 || row < 0 || col >= w || row >= h) {
                out.status[px] = Match::OutOfView;
                continue;
            }
            const Pixel t{static_cast<int>(col), static_cast<int>(row)};
            const double seen = dj[static_cast<std::size_t>(t.row * w + t.col)];
            if (seen >= kBackgroundDepth || std::abs(seen - dot(p, cj.d) * s) > 0.5) {
                out.status[px] = Match::Occluded;
                continue;
            }
            out.status[px] = Match::Valid;
            out.target[px] = t;
        }
    return out;
}

Tensor encode_latents(const RenderedSet& set, std::size_t stride) {
    const std::size_t f = set.images.size();
    if (f == 0) throw DimensionError("encode_latents: empty set");
    const std::size_t h = set.images[0].dim(0), w = set.images[0].dim(1);
    if (stride == 0 || h % stride != 0 || w % stride != 0) {
        throw DomainError("encode_latents: stride must divide the image size");
    }
    const std::size_t lh = h / stride, lw = w / stride;
    Tensor z({f, 3, lh, lw});
    const double inv = 1.0 / static_cast<double>(stride * stride);
    for (std::size_t v = 0; v < f; ++v) {
        const Tensor& img = set.images[v];
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < lh; ++y)
                for (std::size_t x = 0; x < lw; ++x) {
                    double acc = 0.0;
                    for (std::size_t dy = 0; dy < stride; ++dy)
                        for (std::size_t dx = 0; dx < stride; ++dx)
                            acc += img[((y * stride + dy) * w + (x * stride + dx)) * 3 + ch];
                    z[((v * 3 + ch) * lh + y) * lw + x] = 2.0 * acc * inv - 1.0;
                }
    }
    return z;
}

// ---------------------------------------------------------------------------
// Dataset I/O.

namespace {

std::string numbered(const char* stem, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%02d.mvt", stem, i);
    return buf;
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    const RenderedSet& set = data.set;
    const ViewRing& ring = set.ring;
    if (set.images.size() != static_cast<std::size_t>(ring.views) || set.depths.size() != set.images.size()) {
        throw DimensionError("write_dataset: image/depth count does not match the ring");
    }
    std::filesystem::create_directories(dir);
    nlohmann::json m;
    m["version"] = kDatasetVersion;
    m["f"] = ring.views;
    m["W"] = ring.width;
    m["H"] = ring.height;
    m["elevation_deg"] = ring.elevation_deg;
    m["distance"] = ring.distance;
    m["azimuths_deg"] = ring.azimuths_deg;
    m["seed"] = data.seed;
    m["prompt"] = data.prompt;
    m["image_files"] = nlohmann::json::array();
    m["depth_files"] = nlohmann::json::array();
    for (int i = 0; i < ring.views; ++i) {
        const std::string img = numbered("view", i), dep = numbered("depth", i);
        write_mvt(dir / img, set.images[static_cast<std::size_t>(i)]);
        write_mvt(dir / dep, set.depths[static_cast<std::size_t>(i)]);
        m["image_files"].push_back(img);
        m["depth_files"].push_back(dep);
    }
    const auto path = dir / "manifest.json";
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string(), path.string());
    os << m.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream is(path);
    if (!is) throw MissingFileError("dataset manifest not found: " + path.string(), path.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("cannot parse " + path.string() + ": " + e.what(), path.string());
    }

    Dataset out;
    std::vector<std::string> image_files, depth_files;
    ViewRing& ring = out.set.ring;
    try {
        const int version = m.at("version").get<int>();
        if (version != kDatasetVersion) {
            throw ManifestError("dataset version " + std::to_string(version) + " not supported (expected " +
                                    std::to_string(kDatasetVersion) + ")",
                                path.string());
        }
        m.at("f").get_to(ring.views);
        m.at("W").get_to(ring.width);
        m.at("H").get_to(ring.height);
        m.at("elevation_deg").get_to(ring.elevation_deg);
        m.at("distance").get_to(ring.distance);
        m.at("azimuths_deg").get_to(ring.azimuths_deg);
        m.at("image_files").get_to(image_files);
        m.at("depth_files").get_to(depth_files);
        m.at("seed").get_to(out.seed);
        out.prompt = m.value("prompt", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("bad manifest " + path.string() + ": " + e.what(), path.string());
    }

    const auto f = static_cast<std::size_t>(std::max(ring.views, 0));
    if (ring.azimuths_deg.size() != f || image_files.size() != f || depth_files.size() != f) {
        throw ShapeMismatchError("manifest declares " + std::to_string(ring.views) + " views but lists " +
                                     std::to_string(ring.azimuths_deg.size()) + " azimuths, " +
                                     std::to_string(image_files.size()) + " images, " +
                                     std::to_string(depth_files.size()) + " depth maps",
                                 path.string());
    }
    try {
        ring.validate();
    } catch (const DomainError& e) {
        throw ManifestError(std::string("bad ring in ") + path.string() + ": " + e.what(), path.string());
    }

    const Shape img_shape{static_cast<std::size_t>(ring.height), static_cast<std::size_t>(ring.width), 3};
    const Shape depth_shape{static_cast<std::size_t>(ring.height), static_cast<std::size_t>(ring.width)};
    auto load = [&dir](const std::string& name, const Shape& want) {
        const auto p = dir / name;
        Tensor t = read_mvt(p);
        if (t.shape() != want) {
            throw ShapeMismatchError(p.string() + " has shape " + shape_str(t.shape()) + ", manifest implies " +
                                         shape_str(want),
                                     p.string());
        }
        return t;
    };
    for (std::size_t i = 0; i < f; ++i) {
        out.set.images.push_back(load(image_files[i], img_shape));
        out.set.depths.push_back(load(depth_files[i], depth_shape));
    }
    return out;
}

std::string describe_scene(const SceneSpec& scene) {
    scene.validate();
    const Primitive* big = &scene.primitives.front();
    auto volume = [](const Primitive& p) {
        return p.kind == PrimitiveKind::Sphere ? 4.18879 * std::pow(p.half_extent[0], 3)
                                               : 8.0 * p.half_extent[0] * p.half_extent[1] * p.half_extent[2];
    };
    for (const auto& p : scene.primitives)
        if (volume(p) > volume(*big)) big = &p;
    static const char* names[] = {"red", "green", "blue"};
    const auto k = static_cast<std::size_t>(std::max_element(big->color.begin(), big->color.end()) - big->color.begin());
    return std::string("a ") + names[k] + (big->kind == PrimitiveKind::Sphere ? " sphere" : " box");
}

}  // namespace mvd
