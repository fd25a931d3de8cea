// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace reobj {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FormatErrc {
    io,
    bad_magic,
    unsupported_version,
    unsupported_dtype,
    bad_shape,
    truncated,
    trailing_data,
};

const char* to_string(FormatErrc code) noexcept;

/// Raised by the binary tensor/model readers and writers.
class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& path, const std::string& detail)
        : Error(std::string(to_string(code)) + ": " + path + (detail.empty() ? "" : " (" + detail + ")")),
          code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

/// A precondition on a value or shape did not hold.
class ShapeError : public Error {
public:
    using Error::Error;
};

}  // namespace reobj
