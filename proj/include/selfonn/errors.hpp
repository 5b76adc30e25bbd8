#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selfonn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes that do not line up (tensor ops, model input, config chains).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Caller handed us bad values: out-of-range labels, empty datasets, q = 0.
class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Internal invariant violated (stale cache, mismatched pool indices, ...).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch)
        : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

class WeightFileError : public Error {
public:
    using Error::Error;
};

class ConfigMismatchError : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

class CorruptHeaderError : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

class TruncatedFileError : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

} // namespace selfonn
