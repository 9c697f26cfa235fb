#pragma once

#include <stdexcept>
#include <string>

namespace hadamix {

// Error categories surfaced by the CLI as distinct exit codes.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a benchmark would exceed its memory budget; names the limiting
// component so the refusal is actionable.
struct BudgetError : std::runtime_error {
    explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hadamix
