// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/checkpoint.hpp"

#include <fstream>

#include "mvdiff/errors.hpp"
#include "mvdiff/mvt.hpp"

namespace mvd {

namespace fs = std::filesystem;

namespace {

void write_group(const fs::path& dir, const ParamMap& tensors) {
    fs::create_directories(dir);
    for (const auto& [name, t] : tensors) write_mvt(dir / (name + ".mvt"), t);
}

ParamMap read_group(const fs::path& dir, const std::map<std::string, Shape>& shapes) {
    ParamMap out;
    for (const auto& [name, shape] : shapes) {
        const fs::path p = dir / (name + ".mvt");
        Tensor t = read_mvt(p);
        if (t.shape() != shape) {
            throw ShapeMismatchError(p.string() + " has shape " + shape_str(t.shape()) + ", config expects " +
                                         shape_str(shape),
                                     p.string());
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::json m;
    m["version"] = kCheckpointVersion;
    m["config"] = ckpt.model.config;
    m["step"] = ckpt.step;
    m["rng_state"] = ckpt.rng_state;
    m["optimizer_steps"] = ckpt.optimizer.steps();
    m["params"] = nlohmann::json::object();
    for (const auto& [name, t] : ckpt.model.params) m["params"][name] = t.shape();
    m["ring"] = {{"views", ckpt.ring.views},
                 {"azimuths_deg", ckpt.ring.azimuths_deg},
                 {"elevation_deg", ckpt.ring.elevation_deg},
                 {"distance", ckpt.ring.distance},
                 {"width", ckpt.ring.width},
                 {"height", ckpt.ring.height}};
    m["prompt"] = ckpt.prompt;

    write_group(dir / "params", ckpt.model.params);
    write_group(dir / "adam_m", ckpt.optimizer.first_moment());
    write_group(dir / "adam_v", ckpt.optimizer.second_moment());
    const fs::path path = dir / "manifest.json";
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string(), path.string());
    os << m.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream is(path);
    if (!is) throw MissingFileError("checkpoint manifest not found: " + path.string(), path.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("cannot parse " + path.string() + ": " + e.what(), path.string());
    }

    Checkpoint ck;
    std::map<std::string, Shape> stored;
    long opt_steps = 0;
    try {
        const int version = m.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw ManifestError("checkpoint version " + std::to_string(version) + " not supported", path.string());
        }
        m.at("config").get_to(ck.model.config);
        m.at("step").get_to(ck.step);
        m.at("rng_state").get_to(ck.rng_state);
        m.at("optimizer_steps").get_to(opt_steps);
        for (const auto& [name, shape] : m.at("params").items()) stored[name] = shape.get<Shape>();
        const auto& r = m.at("ring");
        r.at("views").get_to(ck.ring.views);
        r.at("azimuths_deg").get_to(ck.ring.azimuths_deg);
        r.at("elevation_deg").get_to(ck.ring.elevation_deg);
        r.at("distance").get_to(ck.ring.distance);
        r.at("width").get_to(ck.ring.width);
        r.at("height").get_to(ck.ring.height);
        m.at("prompt").get_to(ck.prompt);
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("bad checkpoint manifest " + path.string() + ": " + e.what(), path.string());
    } catch (const DomainError& e) {
        throw ManifestError("bad checkpoint config " + path.string() + ": " + e.what(), path.string());
    }
    try {
        ck.model.config.validate();
    } catch (const DomainError& e) {
        throw ManifestError("bad checkpoint config " + path.string() + ": " + e.what(), path.string());
    }

    const auto expected = param_shapes(ck.model.config);
    for (const auto& [name, shape] : expected) {
        auto it = stored.find(name);
        if (it == stored.end()) {
            throw ShapeMismatchError("checkpoint lacks parameter " + name, path.string());
        }
        if (it->second != shape) {
            throw ShapeMismatchError("parameter " + name + " stored as " + shape_str(it->second) +
                                         ", config expects " + shape_str(shape),
                                     path.string());
        }
    }
    if (stored.size() != expected.size()) {
        for (const auto& [name, shape] : stored)
            if (!expected.count(name)) {
                throw ShapeMismatchError("checkpoint has unexpected parameter " + name, path.string());
            }
    }

    ck.model.params = read_group(dir / "params", expected);
    if (opt_steps > 0) {
        ck.optimizer.first_moment() = read_group(dir / "adam_m", expected);
        ck.optimizer.second_moment() = read_group(dir / "adam_v", expected);
    }
    ck.optimizer.set_steps(opt_steps);
    return ck;
}

}  // namespace mvd
