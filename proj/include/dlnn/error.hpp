#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlnn {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or precondition on user-provided values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
public:
    using Error::Error;
};

/// A loss, residual or rate became NaN/Inf. Carries the first offending sample.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, std::ptrdiff_t sample)
        : Error(what + (sample >= 0 ? " (sample " + std::to_string(sample) + ")" : std::string{})),
          sample_(sample) {}

    std::ptrdiff_t sample() const noexcept { return sample_; }

private:
    std::ptrdiff_t sample_;
};

/// Training loss exceeded the divergence threshold.
class DivergenceError : public Error {
public:
    using Error::Error;
};

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

inline void require_config(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace dlnn
