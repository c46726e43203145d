#pragma once

#include <stdexcept>
#include <string>

namespace vlearn {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values or malformed configuration input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor or image dimensions that do not fit the receiving operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Failure inside one stage of the pipeline; `stage()` names it.
class StageError : public Error {
public:
    StageError(std::string stage, std::string what)
        : Error(stage + ": " + what), stage_(std::move(stage)), message_(std::move(what)) {}

    const std::string& stage() const noexcept { return stage_; }
    /// The underlying failure without the stage prefix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string stage_;
    std::string message_;
};

}  // namespace vlearn
