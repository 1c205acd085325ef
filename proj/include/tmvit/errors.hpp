#pragma once

#include <stdexcept>
#include <string>

namespace tmvit {

// Base class for every error the engine throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension mismatch between tensors.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Argument outside its legal range (keep rate, schedule target, ...).
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Inconsistent model configuration, or weights that do not fit the config.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input file contents (e.g. PPM parsing).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Filesystem-level failure (open/write/rename).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Weight-container failure, tagged with what exactly went wrong so callers
// can distinguish a bad magic from a truncated payload.
class WeightFileError : public Error {
public:
    enum class Kind {
        BadMagic,
        BadHeader,
        DuplicateTensor,
        BadLayout,
        Truncated,
        MissingTensor,
        ShapeMismatch,
    };

    WeightFileError(Kind k, const std::string& msg) : Error(msg), kind(k) {}

    Kind kind;
};

} // namespace tmvit
