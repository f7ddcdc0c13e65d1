// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "mvdiff/errors.hpp"
#include "mvdiff/mvt.hpp"

using namespace mvd;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = n(rng);
    return t;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("mvd_test_mvt_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Mvt, HeaderLayout) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    auto bytes = encode_mvt(t, DType::F32);
    ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 2 * 4 + 6 * 4);
    EXPECT_EQ(std::memcmp(bytes.data(), "MVT1", 4), 0);
    EXPECT_EQ(bytes[4], 0);
    EXPECT_EQ(bytes[5], 2);
    EXPECT_EQ(bytes[6], 2);
    EXPECT_EQ(bytes[7], 0);
    EXPECT_EQ(bytes[10], 3);
    float first;
    std::memcpy(&first, bytes.data() + 14, 4);
    EXPECT_EQ(first, 1.0f);
}

TEST(Mvt, F64RoundTripIsBitExact) {
    Tensor t = random_tensor({3, 4, 5}, 1);
    DType dt;
    Tensor back = decode_mvt(encode_mvt(t, DType::F64), "mem", &dt);
    EXPECT_EQ(dt, DType::F64);
    EXPECT_EQ(back, t);
}

TEST(Mvt, F32RoundTripOfF32Values) {
    Tensor t = random_tensor({7}, 2);
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    Tensor back = decode_mvt(encode_mvt(t, DType::F32));
    EXPECT_EQ(back, t);
    // and the bytes themselves are stable
    EXPECT_EQ(encode_mvt(back, DType::F32), encode_mvt(t, DType::F32));
}

TEST(Mvt, FileRoundTrip) {
    fs::path dir = temp_dir("file");
    Tensor t = random_tensor({2, 2}, 3);
    write_mvt(dir / "a.mvt", t);
    EXPECT_EQ(read_mvt(dir / "a.mvt"), t);
}

TEST(Mvt, MissingFile) {
    fs::path dir = temp_dir("missing");
    EXPECT_THROW(read_mvt(dir / "nope.mvt"), MissingFileError);
}

TEST(Mvt, TruncatedPayloadNamesFile) {
    fs::path dir = temp_dir("trunc");
    write_mvt(dir / "t.mvt", random_tensor({4, 4}, 4));
    fs::resize_file(dir / "t.mvt", fs::file_size(dir / "t.mvt") - 3);
    try {
        read_mvt(dir / "t.mvt");
        FAIL() << "expected CorruptPayloadError";
    } catch (const CorruptPayloadError& e) {
        EXPECT_NE(std::string(e.what()).find("t.mvt"), std::string::npos);
    }
}

TEST(Mvt, BadMagicAndDtype) {
    auto bytes = encode_mvt(Tensor({1}, 1.0));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_mvt(bad), CorruptPayloadError);
    bad = bytes;
    bad[4] = 7;
    EXPECT_THROW(decode_mvt(bad), CorruptPayloadError);
    bytes.push_back(0);
    EXPECT_THROW(decode_mvt(bytes), CorruptPayloadError);
}
