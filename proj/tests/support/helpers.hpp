#pragma once

// Shared test scaffolding: temp dirs, an independent SHA-256, stub providers
// and in-process stub HTTP endpoints.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "campusrag/common.hpp"
#include "campusrag/embed.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(CAMPUSRAG_SOURCE_DIR); }

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("campusrag-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// Settable clock for deterministic timestamps.
struct ManualClock {
    std::shared_ptr<std::atomic<campusrag::Timestamp>> now =
        std::make_shared<std::atomic<campusrag::Timestamp>>(1737901950);  // 2025-01-26 14:32:30 UTC
    campusrag::Clock clock() const {
        auto p = now;
        return [p] { return p->load(); };
    }
    void advance(campusrag::Timestamp s) { *now += s; }
};

// ---- reference SHA-256 (FIPS 180-4), written independently of OpenSSL -------

inline std::string sha256_reference(std::string_view message) {
    static constexpr std::array<std::uint32_t, 64> k = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
        0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
        0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
        0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                      0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    auto rotr = [](std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); };

    std::vector<std::uint8_t> data(message.begin(), message.end());
    const std::uint64_t bit_len = static_cast<std::uint64_t>(data.size()) * 8;
    data.push_back(0x80);
    while (data.size() % 64 != 56) data.push_back(0);
    for (int i = 7; i >= 0; --i) data.push_back(static_cast<std::uint8_t>(bit_len >> (8 * i)));

    for (std::size_t block = 0; block < data.size(); block += 64) {
        std::array<std::uint32_t, 64> w{};
        for (int t = 0; t < 16; ++t)
            w[t] = (std::uint32_t(data[block + 4 * t]) << 24) | (std::uint32_t(data[block + 4 * t + 1]) << 16) |
                   (std::uint32_t(data[block + 4 * t + 2]) << 8) | std::uint32_t(data[block + 4 * t + 3]);
        for (int t = 16; t < 64; ++t) {
            std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
            std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
            w[t] = w[t - 16] + s0 + w[t - 7] + s1;
        }
        auto [a, b, c, d, e, f, g, hh] = h;
        for (int t = 0; t < 64; ++t) {
            std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = hh + S1 + ch + k[t] + w[t];
            std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = S0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (auto word : h)
        for (int i = 28; i >= 0; i -= 4) out.push_back(hex[(word >> i) & 0xF]);
    return out;
}

// ---- providers -----------------------------------------------------------------

// Each distinct text gets its own axis, so distinct tokens are exactly orthogonal.
class OneHotEmbedder final : public campusrag::embed::EmbeddingProvider {
public:
    explicit OneHotEmbedder(std::size_t dim = 64) : dim_(dim) {}
    std::string name() const override { return "onehot"; }
    std::string model() const override { return "test"; }
    std::size_t dim() const override { return dim_; }
    std::vector<campusrag::embed::Vector> embed_batch(std::span<const std::string> texts) const override {
        std::lock_guard lock(mutex_);
        std::vector<campusrag::embed::Vector> out;
        for (const auto& t : texts) {
            auto [it, _] = axis_.emplace(t, axis_.size());
            if (it->second >= dim_) throw campusrag::InvalidInput("OneHotEmbedder out of axes");
            campusrag::embed::Vector v(dim_, 0.0);
            v[it->second] = 1.0;
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    std::size_t dim_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::size_t> axis_;
};

// Wraps a provider; counts texts and can be told to fail or to block.
class ControlledEmbedder final : public campusrag::embed::EmbeddingProvider {
public:
    explicit ControlledEmbedder(const campusrag::embed::EmbeddingProvider& inner) : inner_(inner) {}
    std::string name() const override { return inner_.name(); }
    std::string model() const override { return inner_.model(); }
    std::size_t dim() const override { return inner_.dim(); }
    std::vector<campusrag::embed::Vector> embed_batch(std::span<const std::string> texts) const override {
        if (gate) gate();
        if (fail.load())
            throw campusrag::RemoteError(campusrag::RemoteError::Kind::HttpStatus, "controlled", "injected", 503, 0);
        calls += texts.size();
        return inner_.embed_batch(texts);
    }

    mutable std::atomic<std::size_t> calls{0};
    std::atomic<bool> fail{false};
    std::function<void()> gate;

private:
    const campusrag::embed::EmbeddingProvider& inner_;
};

// ---- stub HTTP endpoints ---------------------------------------------------------

class StubServer {
public:
    StubServer() = default;
    ~StubServer() { stop(); }

    httplib::Server& server() { return server_; }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }
    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

// Chat-completion stub: replies with the content of the last message, or
// with a fixed HTTP status when `status` is not 200.
class LlmStub {
public:
    LlmStub() {
        stub_.server().Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mutex_);
                requests_.push_back(nlohmann::json::parse(req.body));
                headers_.push_back(req.get_header_value("Authorization"));
            }
            if (status.load() != 200) {
                res.status = status.load();
                res.set_content("{\"error\":\"unavailable\"}", "application/json");
                return;
            }
            if (malformed.load()) {
                res.set_content("{\"unexpected\": true}", "application/json");
                return;
            }
            auto body = nlohmann::json::parse(req.body);
            std::string last = body["messages"].back()["content"];
            nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", last}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        stub_.start();
    }

    std::string url() const { return stub_.url("/v1/chat/completions"); }
    std::vector<nlohmann::json> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    std::vector<std::string> auth_headers() const {
        std::lock_guard lock(mutex_);
        return headers_;
    }

    std::atomic<int> status{200};
    std::atomic<bool> malformed{false};

private:
    StubServer stub_;
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> requests_;
    std::vector<std::string> headers_;
};

// Sets an environment variable for the lifetime of the object.
class ScopedEnv {
public:
    ScopedEnv(std::string name, const std::string& value) : name_(std::move(name)) {
        if (const char* old = std::getenv(name_.c_str())) old_ = old;
        ::setenv(name_.c_str(), value.c_str(), 1);
    }
    ~ScopedEnv() {
        if (old_) ::setenv(name_.c_str(), old_->c_str(), 1);
        else ::unsetenv(name_.c_str());
    }

private:
    std::string name_;
    std::optional<std::string> old_;
};

}  // namespace testing
