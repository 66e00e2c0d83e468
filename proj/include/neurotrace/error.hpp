#pragma once

#include <stdexcept>
#include <string>

namespace neurotrace {

// Bad input: malformed files, out-of-range ids, inconsistent shapes.
// The CLI maps this to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values, divergence, degenerate ratios. Exit code 1.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace neurotrace
