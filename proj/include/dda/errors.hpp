#pragma once

#include <stdexcept>
#include <string>

namespace dda {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement.
struct ShapeError : Error {
    using Error::Error;
};

// Unknown or illegal branch / pathway selection.
struct RoutingError : Error {
    using Error::Error;
};

// Train-mode batch statistics undefined (batch < 2).
struct DegenerateBatchError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite value in a place that must stay finite (loss terms, metrics).
struct NumericError : Error {
    using Error::Error;
};

} // namespace dda
