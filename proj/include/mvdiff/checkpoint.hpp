// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory:
//   manifest.json        version, config echo, step, RNG state, optimiser
//                        step count, parameter table, ring and prompt
//   params/<name>.mvt    parameters (f64)
//   adam_m/<name>.mvt    optimiser moments (f64)
//   adam_v/<name>.mvt

#pragma once

#include <filesystem>
#include <string>

#include "mvdiff/denoiser.hpp"

namespace mvd {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    AdamW optimizer;
    long step = 0;
    std::string rng_state;  // std::mt19937_64 stream form
    ViewRing ring;
    std::string prompt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

// Every stored tensor must match the shape the stored config implies;
// otherwise ShapeMismatchError. MissingFileError, ManifestError and
// CorruptPayloadError as for datasets.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mvd
