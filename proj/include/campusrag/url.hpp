#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace campusrag {

struct HttpUrl {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;        // explicit or scheme default
    std::string target;  // path + query, at least "/"

    std::string origin() const;  // scheme://host:port
};

// Absolute http(s) URL with a non-empty host and no whitespace; nullopt otherwise.
std::optional<HttpUrl> parse_http_url(std::string_view text);

}  // namespace campusrag
