#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace itm {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input value outside an operation's mathematical domain.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Mismatched image/tensor dimensions.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Absolute scale cannot be recovered: the LDR image has no zero pixels,
// so the geometric mean carries no scale information. Callers may supply
// an explicit g_override instead.
class ScaleUnrecoverableError : public Error {
public:
    explicit ScaleUnrecoverableError(const std::string& msg) : Error(msg) {}
};

// Malformed file content. Carries the byte offset where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

// Payload checksum mismatch or otherwise corrupted container.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg) : Error(msg) {}
};

// Stored configuration incompatible with the requested one.
class ConfigMismatchError : public Error {
public:
    explicit ConfigMismatchError(const std::string& msg) : Error(msg) {}
};

}  // namespace itm
