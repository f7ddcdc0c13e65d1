// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mvd {

// Shape or extent incompatibility between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside its documented domain (index, stride, probability ...).
class DomainError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// A value that should be finite is not.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what, std::string path = {})
        : std::runtime_error(what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// File missing or unreadable.
class MissingFileError : public IoError {
public:
    using IoError::IoError;
};

// File present but its bytes do not decode (bad magic, truncated payload).
class CorruptPayloadError : public IoError {
public:
    using IoError::IoError;
};

// Manifest unreadable, wrong version or missing fields.
class ManifestError : public IoError {
public:
    using IoError::IoError;
};

// Stored data disagrees with the shape its manifest or config declares.
class ShapeMismatchError : public IoError {
public:
    using IoError::IoError;
};

}  // namespace mvd
