#pragma once

#include <stdexcept>
#include <string>

namespace rfvar {

// Bad parameter combinations (CLI exit code 3).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad input data: unreadable files, malformed CSV, degenerate coverage
// (CLI exit code 2).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rfvar
