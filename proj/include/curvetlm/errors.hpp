#pragma once

#include <stdexcept>
#include <string>

namespace curvetlm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid scenario or object configuration. `field()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class CrossingOnBoundary : public Error {
public:
    using Error::Error;
};

class SingularAtResonance : public Error {
public:
    using Error::Error;
};

class UnstableSection : public Error {
public:
    using Error::Error;
};

class CurveOutOfBounds : public Error {
public:
    using Error::Error;
};

class SingularCoupling : public Error {
public:
    using Error::Error;
};

/// The curve is too curved for the mesh: consecutive crossings are not in one cell.
class MeshTooCoarse : public Error {
public:
    using Error::Error;
};

}  // namespace curvetlm
