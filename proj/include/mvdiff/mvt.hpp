// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// ".mvt" binary tensor files:
//   "MVT1" | u8 dtype (0 = f32, 1 = f64) | u8 ndim | ndim x u32le extents |
//   row-major little-endian payload

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvdiff/tensor.hpp"

namespace mvd {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::vector<std::uint8_t> encode_mvt(const Tensor& t, DType dtype = DType::F64);

// `origin` names the source in error messages.
Tensor decode_mvt(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>",
                  DType* dtype_out = nullptr);

void write_mvt(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::F64);

// Throws MissingFileError when the file cannot be opened and
// CorruptPayloadError (naming the file) when its bytes do not decode.
Tensor read_mvt(const std::filesystem::path& path, DType* dtype_out = nullptr);

}  // namespace mvd
