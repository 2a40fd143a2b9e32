#pragma once
// Error taxonomy shared across the library. Validation failures on domain
// values raise ValidationError; malformed run configuration raises
// ConfigError; file-system trouble raises IoError. The CLI maps ConfigError
// and ValidationError to exit code 2 and everything else to 3.

#include <stdexcept>
#include <string>

namespace toolforge {

class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace toolforge
