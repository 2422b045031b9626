#pragma once

#include <stdexcept>
#include <string>

namespace efemb {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

// Value outside the support or natural-parameter domain of a family.
class DomainError : public Error {
public:
    using Error::Error;
};

class DegenerateContextError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DataError : public Error {
public:
    using Error::Error;
};

class CompatibilityError : public DataError {
public:
    using DataError::DataError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// 0 success, 2 usage/config, 3 data, 4 numeric abort.
inline int exit_code(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    return 3;
}

}  // namespace efemb
