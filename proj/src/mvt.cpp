// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/mvt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "mvdiff/errors.hpp"

namespace mvd {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'T', '1'};

static_assert(std::endian::native == std::endian::little, ".mvt I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_mvt(const Tensor& t, DType dtype) {
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw DimensionError("mvt: rank too large");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) {
        if (e > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("mvt: extent exceeds u32");
        put(out, static_cast<std::uint32_t>(e));
    }
    const std::size_t width = dtype == DType::F32 ? 4 : 8;
    out.reserve(out.size() + t.size() * width);
    for (double v : t.data()) {
        if (dtype == DType::F32) {
            put(out, static_cast<float>(v));
        } else {
            put(out, v);
        }
    }
    return out;
}

Tensor decode_mvt(const std::vector<std::uint8_t>& bytes, const std::string& origin, DType* dtype_out) {
    auto corrupt = [&](const std::string& why) { return CorruptPayloadError(origin + ": " + why, origin); };
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw corrupt("bad magic");
    const std::uint8_t code = bytes[4];
    if (code > 1) throw corrupt("unknown dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const std::size_t ndim = bytes[5];
    if (ndim == 0) throw corrupt("zero-rank tensor");
    std::size_t pos = 6;
    if (bytes.size() < pos + 4 * ndim) throw corrupt("truncated header");
    Shape shape(ndim);
    for (auto& e : shape) {
        e = take<std::uint32_t>(bytes, pos);
        if (e == 0) throw corrupt("zero extent");
    }
    const std::size_t width = dtype == DType::F32 ? 4 : 8;
    const std::size_t count = numel(shape);
    if (bytes.size() - pos != count * width) {
        throw corrupt("payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(count * width));
    }
    std::vector<double> data(count);
    for (auto& v : data) v = dtype == DType::F32 ? take<float>(bytes, pos) : take<double>(bytes, pos);
    if (dtype_out) *dtype_out = dtype;
    return Tensor(std::move(shape), std::move(data));
}

void write_mvt(const std::filesystem::path& path, const Tensor& t, DType dtype) {
    const auto bytes = encode_mvt(t, dtype);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing", path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string(), path.string());
}

Tensor read_mvt(const std::filesystem::path& path, DType* dtype_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFileError("cannot open " + path.string(), path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_mvt(bytes, path.string(), dtype_out);
}

}  // namespace mvd
