#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace despawn {

enum class ErrorKind {
    InvalidKernel,
    InvalidSignal,
    InvalidPyramid,
    InvalidDepth,
    Configuration,
    InvalidInput,
    Index,
    State,
    UndefinedMetric,
    Format,
    Io,
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidKernel: return "invalid kernel";
        case ErrorKind::InvalidSignal: return "invalid signal";
        case ErrorKind::InvalidPyramid: return "invalid pyramid";
        case ErrorKind::InvalidDepth: return "invalid depth";
        case ErrorKind::Configuration: return "configuration error";
        case ErrorKind::InvalidInput: return "invalid input";
        case ErrorKind::Index: return "index error";
        case ErrorKind::State: return "state error";
        case ErrorKind::UndefinedMetric: return "undefined metric";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Io: return "i/o error";
    }
    return "error";
}

/// Every failure raised by the library carries one of the ErrorKind tags.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed file content; byte_offset points at the offending field.
class FormatError : public Error {
public:
    FormatError(const std::string& message, std::size_t byte_offset)
        : Error(ErrorKind::Format, message + " (at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

}  // namespace despawn
