#pragma once

#include <stdexcept>
#include <string>

namespace advfield {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor extents or ranks.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// NaN/Inf escaped an operation, or a numeric guard tripped.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

// Unreadable, corrupt or unwritable files.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// Bad user-supplied configuration (unknown keys, infeasible ranges, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

} // namespace advfield
