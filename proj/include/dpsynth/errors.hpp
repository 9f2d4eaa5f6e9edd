#pragma once

#include <stdexcept>
#include <string>

namespace dpsynth {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, broken invariants, out-of-range inputs. CLI exit code 2.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Malformed file container (bad magic, truncated payload, ...).
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Noise-multiplier search could not hit the target inside its bracket.
struct CalibrationError : Error {
    explicit CalibrationError(const std::string& msg) : Error(msg) {}
};

// Accounted privacy cost exceeds the configured target. CLI exit code 3.
struct BudgetError : Error {
    explicit BudgetError(const std::string& msg) : Error(msg) {}
};

// Combinatorial enumeration would exceed the configured guard.
struct SizeError : Error {
    explicit SizeError(const std::string& msg) : Error(msg) {}
};

// Division by a vanishing schedule coefficient.
struct SingularityError : Error {
    explicit SingularityError(const std::string& msg) : Error(msg) {}
};

} // namespace dpsynth
