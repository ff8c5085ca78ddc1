#pragma once

#include <stdexcept>
#include <string>

namespace dimerge {

/// Coarse failure family. The CLI maps these onto exit codes.
enum class ErrorCategory {
    config,   // invalid or incomplete configuration
    io,       // filesystem failures and malformed files
    shape,    // tensor shape / rank / alignment problems
    numeric,  // non-finite values, out-of-range parameters
};

/// Every library failure is a dimerge::Error carrying a machine-readable class
/// such as "io.missing_file" or "shape.mismatch".
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string error_class, const std::string& message)
        : std::runtime_error(message), category_(category), error_class_(std::move(error_class)) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& error_class() const noexcept { return error_class_; }

private:
    ErrorCategory category_;
    std::string error_class_;
};

[[noreturn]] inline void throw_error(ErrorCategory category, std::string error_class, const std::string& message) {
    throw Error(category, std::move(error_class), message);
}

}  // namespace dimerge
