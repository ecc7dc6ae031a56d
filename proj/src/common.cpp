#include "campusrag/common.hpp"

#include <chrono>
#include <ctime>

namespace campusrag {

Timestamp system_now() {
    using namespace std::chrono;
    return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

std::string format_utc(Timestamp t) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &tm);
    return buf;
}

RemoteError::RemoteError(Kind kind, std::string source, std::string detail, int status, long batch)
    : Error(source + ": " + to_string(kind) + (status ? " (HTTP " + std::to_string(status) + ")" : "") +
            (batch >= 0 ? " [batch " + std::to_string(batch) + "]" : "") +
            (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      source_(std::move(source)),
      status_(status),
      batch_(batch) {}

const char* to_string(RemoteError::Kind kind) {
    switch (kind) {
        case RemoteError::Kind::Timeout: return "timeout";
        case RemoteError::Kind::Transport: return "transport error";
        case RemoteError::Kind::RateLimited: return "rate limited";
        case RemoteError::Kind::HttpStatus: return "http error";
        case RemoteError::Kind::MalformedResponse: return "malformed response";
    }
    return "unknown";
}

}  // namespace campusrag
