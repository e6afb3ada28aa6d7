#pragma once

#include <stdexcept>
#include <string>

namespace lmtl {

// Malformed or inconsistent data: bad files, sizing errors, shape and
// vocabulary mismatches. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric breakdown during training or evaluation (non-finite loss or
// gradient). CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lmtl
