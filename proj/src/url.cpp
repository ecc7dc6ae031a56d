#include "campusrag/url.hpp"

#include <cctype>
#include <charconv>

namespace campusrag {

std::string HttpUrl::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

std::optional<HttpUrl> parse_http_url(std::string_view text) {
    HttpUrl url;
    std::string_view rest;
    auto starts = [&](std::string_view prefix) {
        if (text.size() < prefix.size()) return false;
        for (std::size_t i = 0; i < prefix.size(); ++i)
            if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i]) return false;
        return true;
    };
    if (starts("http://")) {
        url.scheme = "http";
        url.port = 80;
        rest = text.substr(7);
    } else if (starts("https://")) {
        url.scheme = "https";
        url.port = 443;
        rest = text.substr(8);
    } else {
        return std::nullopt;
    }
    for (char c : text)
        if (std::isspace(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) < 0x20) return std::nullopt;

    std::size_t end = rest.find_first_of("/?#");
    std::string_view authority = rest.substr(0, end);
    if (authority.find('@') != std::string_view::npos) return std::nullopt;  // no userinfo
    std::string_view host = authority;
    if (!authority.empty() && authority.front() == '[') {
        auto close = authority.find(']');
        if (close == std::string_view::npos) return std::nullopt;
        host = authority.substr(0, close + 1);
        auto after = authority.substr(close + 1);
        if (!after.empty()) {
            if (after.front() != ':') return std::nullopt;
            authority = after;
        } else {
            authority = {};
        }
    }
    if (auto colon = authority.rfind(':'); colon != std::string_view::npos && authority.front() != '[') {
        if (host == authority) host = authority.substr(0, colon);
        auto port_text = authority.substr(colon + 1);
        int port = 0;
        auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
        if (ec != std::errc() || p != port_text.data() + port_text.size() || port <= 0 || port > 65535)
            return std::nullopt;
        url.port = port;
    }
    if (host.empty()) return std::nullopt;
    for (char c : host) {
        unsigned char u = static_cast<unsigned char>(c);
        if (!(std::isalnum(u) || c == '-' || c == '.' || c == '_' || c == '[' || c == ']' || c == ':' || u >= 0x80))
            return std::nullopt;
    }
    url.host = std::string(host);
    if (end == std::string_view::npos) {
        url.target = "/";
    } else {
        std::string_view target = rest.substr(end);
        if (auto hash = target.find('#'); hash != std::string_view::npos) target = target.substr(0, hash);
        url.target = target.empty() || target.front() != '/' ? "/" + std::string(target) : std::string(target);
    }
    return url;
}

}  // namespace campusrag
