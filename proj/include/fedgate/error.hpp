#pragma once

#include <stdexcept>
#include <string>

namespace fedgate {

// Bad input data: missing files, unknown columns, unparseable cells, empty tables.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure: non-finite weights, degenerate scale.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int epoch)
        : NumericError(what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace fedgate
