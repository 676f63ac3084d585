#pragma once

#include <stdexcept>
#include <string>

namespace triage {

// Error taxonomy mirrors the CLI exit-code contract:
// usage/config -> 2, backend -> 3, data validation -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& msg) : Error(msg) {}
};

// Delivered-but-malformed response from a backend.
class ProtocolError : public BackendError {
public:
    explicit ProtocolError(const std::string& msg) : BackendError(msg) {}
};

}  // namespace triage
