#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace campusrag {

// Unix seconds, UTC.
using Timestamp = std::int64_t;

using Clock = std::function<Timestamp()>;

Timestamp system_now();

// "2025-01-26 14:32:30"
std::string format_utc(Timestamp t);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a precondition.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class StoreError : public Error {
public:
    using Error::Error;
};

// Failure talking to an external service (embedding endpoint, LLM endpoint, web fetch).
class RemoteError : public Error {
public:
    enum class Kind { Timeout, Transport, RateLimited, HttpStatus, MalformedResponse };

    RemoteError(Kind kind, std::string source, std::string detail, int status = 0, long batch = -1);

    Kind kind() const noexcept { return kind_; }
    const std::string& source() const noexcept { return source_; }
    int status() const noexcept { return status_; }
    long batch_index() const noexcept { return batch_; }
    bool retryable() const noexcept { return kind_ != Kind::MalformedResponse; }

private:
    Kind kind_;
    std::string source_;
    int status_;
    long batch_;
};

const char* to_string(RemoteError::Kind kind);

}  // namespace campusrag
