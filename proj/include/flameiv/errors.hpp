#pragma once

#include <stdexcept>
#include <string>

namespace flameiv {

// Bad configuration: unusable flags, mismatched schemas, missing roles.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or out-of-contract input data; carries a row index when known.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what, long row = -1)
        : std::runtime_error(what), row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

class EmptyInputError : public ValidationError {
public:
    explicit EmptyInputError(const std::string& what) : ValidationError(what) {}
};

// Pooled instrument effect on treatment is zero; ratio estimators undefined.
class WeakInstrumentError : public std::runtime_error {
public:
    explicit WeakInstrumentError(const std::string& what) : std::runtime_error(what) {}
};

class RankDeficiencyError : public std::runtime_error {
public:
    explicit RankDeficiencyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flameiv
