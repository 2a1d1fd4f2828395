// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace harmodop {

/// Broad failure class, surfaced by the CLI as a machine-parseable tag.
enum class ErrorCategory {
    domain,   // argument outside a mathematical or physical domain
    format,   // malformed, truncated, or corrupt file content
    io,       // file system failure
    usage,    // bad command line or configuration key
    config,   // configuration value out of range
};

std::string_view to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error(ErrorCategory::domain, message) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& message) : Error(ErrorCategory::format, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorCategory::usage, message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCategory::config, message) {}
};

}  // namespace harmodop
