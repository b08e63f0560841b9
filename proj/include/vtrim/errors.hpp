// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vtrim {

// Raised for invalid user-supplied configuration (bad ratios, impossible
// schedules, malformed config files). The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an internal invariant is violated at run time (shape
// mismatches, cache metadata out of sync). The CLI maps this to exit code 3.
class state_error : public std::runtime_error {
public:
    explicit state_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vtrim
