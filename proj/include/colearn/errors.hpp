#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace colearn {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatches, out-of-range knobs and other precondition violations.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Zero-norm vectors and similar inputs for which an operation is undefined.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

/// A class whose centroid cannot be formed (zero total weight, missing
/// from the labels, or a centroid that cancels to the zero vector).
class DegenerateClass : public Error {
public:
    DegenerateClass(std::size_t cls, const std::string& what)
        : Error("class " + std::to_string(cls) + ": " + what), class_index_(cls) {}

    std::size_t class_index() const noexcept { return class_index_; }

private:
    std::size_t class_index_;
};

/// Malformed binary or text file. `offset` is the byte (or line, for
/// text formats) where decoding failed.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& what)
        : Error("format error at offset " + std::to_string(offset) + ": " + what),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or parameters during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace colearn
