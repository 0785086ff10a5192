#pragma once

#include <stdexcept>
#include <string>

namespace ppgan {

/// Input or configuration that violates a documented invariant.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// On-disk data that cannot be decoded (bad magic, truncation, corrupt JSON).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure while a computation is running (non-finite loss, I/O failure).
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ppgan
