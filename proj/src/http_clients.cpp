#include <chrono>
#include <cstdlib>
#include <future>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "campusrag/chat.hpp"
#include "campusrag/embed.hpp"
#include "campusrag/ingest.hpp"
#include "campusrag/url.hpp"

namespace campusrag {

namespace {

using json = nlohmann::json;
using Kind = RemoteError::Kind;

struct Target {
    HttpUrl url;
    std::unique_ptr<httplib::Client> client;
};

Target connect(const std::string& source, const std::string& address, std::chrono::milliseconds timeout) {
    auto url = parse_http_url(address);
    if (!url) throw RemoteError(Kind::Transport, source, "invalid endpoint URL");
    auto client = std::make_unique<httplib::Client>(url->origin());
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client->set_connection_timeout(secs.count(), usecs.count());
    client->set_read_timeout(secs.count(), usecs.count());
    client->set_write_timeout(secs.count(), usecs.count());
    return {std::move(*url), std::move(client)};
}

[[noreturn]] void throw_transport(const std::string& source, httplib::Error err,
                                  std::chrono::steady_clock::time_point started, std::chrono::milliseconds timeout,
                                  long batch = -1) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && elapsed >= timeout * 9 / 10);
    throw RemoteError(timed_out ? Kind::Timeout : Kind::Transport, source, httplib::to_string(err), 0, batch);
}

[[noreturn]] void throw_status(const std::string& source, int status, long batch = -1) {
    throw RemoteError(status == 429 ? Kind::RateLimited : Kind::HttpStatus, source, "", status, batch);
}

httplib::Headers auth_headers(const std::string& key_env) {
    httplib::Headers headers;
    if (const char* key = std::getenv(key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    return headers;
}

}  // namespace

// ---- embeddings ------------------------------------------------------------------

namespace embed {

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config)
    : config_(std::move(config)), in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 64)) {
    if (!parse_http_url(config_.base_url)) throw InvalidInput("embedding base_url is not an http(s) URL");
    if (config_.model.empty()) throw InvalidInput("embedding model must be set");
    if (config_.dim == 0) throw InvalidInput("embedding dim must be positive");
    if (config_.batch_size == 0) throw InvalidInput("embedding batch_size must be positive");
}

HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;

std::vector<Vector> HttpEmbeddingProvider::post_batch(std::span<const std::string> texts, long batch_index) const {
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    auto target = connect("embedding:" + config_.model, config_.base_url, config_.timeout);
    json body = {{"model", config_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    const auto started = std::chrono::steady_clock::now();
    auto res = target.client->Post(target.url.target, auth_headers(config_.api_key_env), body.dump(),
                                   "application/json");
    const std::string source = name() + ":" + config_.model;
    if (!res) throw_transport(source, res.error(), started, config_.timeout, batch_index);
    if (res->status < 200 || res->status >= 300) throw_status(source, res->status, batch_index);
    std::vector<Vector> out;
    try {
        auto j = json::parse(res->body);
        for (const auto& item : j.at("data")) out.push_back(item.at("embedding").get<Vector>());
    } catch (const json::exception& e) {
        throw RemoteError(Kind::MalformedResponse, source, e.what(), 0, batch_index);
    }
    if (out.size() != texts.size())
        throw RemoteError(Kind::MalformedResponse, source,
                          "expected " + std::to_string(texts.size()) + " embeddings, got " + std::to_string(out.size()),
                          0, batch_index);
    return out;
}

std::vector<Vector> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
    std::vector<std::future<std::vector<Vector>>> parts;
    long batch = 0;
    for (std::size_t i = 0; i < texts.size(); i += config_.batch_size, ++batch) {
        auto slice = texts.subspan(i, std::min(config_.batch_size, texts.size() - i));
        parts.push_back(std::async(std::launch::async, [this, slice, batch] { return post_batch(slice, batch); }));
    }
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (auto& p : parts)
        for (auto& v : p.get()) out.push_back(std::move(v));
    return out;
}

}  // namespace embed

// ---- web fetch -------------------------------------------------------------------

namespace ingest {

FetchResponse HttpFetcher::fetch(const std::string& url, std::chrono::milliseconds timeout) const {
    auto target = connect("fetch", url, timeout);
    target.client->set_follow_location(true);
    const auto started = std::chrono::steady_clock::now();
    auto res = target.client->Get(target.url.target);
    if (!res) throw_transport("fetch", res.error(), started, timeout);
    return {res->status, res->body};
}

}  // namespace ingest

// ---- chat completion -------------------------------------------------------------

namespace chat {

std::string HttpChatClient::complete(std::span<const ChatMessage> messages, const LlmConfig& config) const {
    auto target = connect("llm", config.base_url, config.timeout);
    const auto started = std::chrono::steady_clock::now();
    auto res = target.client->Post(target.url.target, auth_headers(config.api_key_env),
                                   completion_request_body(messages, config), "application/json");
    if (!res) throw_transport("llm", res.error(), started, config.timeout);
    if (res->status < 200 || res->status >= 300) throw_status("llm", res->status);
    return parse_completion(res->body);
}

}  // namespace chat

}  // namespace campusrag
