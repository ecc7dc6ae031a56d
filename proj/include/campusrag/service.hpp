#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "campusrag/chat.hpp"
#include "campusrag/embed.hpp"
#include "campusrag/ingest.hpp"
#include "campusrag/retriever.hpp"
#include "campusrag/syncpipe.hpp"
#include "campusrag/vecstore.hpp"

namespace campusrag::service {

inline constexpr const char* kVersion = "0.1.0";

struct EmbeddingSettings {
    std::string provider = "hashing";  // "hashing" or "http"
    std::size_t dim = 256;
    std::uint64_t seed = embed::HashingEmbedder::kDefaultSeed;
    embed::SynonymTable synonyms;
    // http provider only
    std::string base_url;
    std::string model;
    std::string api_key_env = "EMBED_API_KEY";
    std::size_t batch_size = 64;
    std::ptrdiff_t max_in_flight = 4;
    std::chrono::milliseconds timeout{30000};
};

struct AppConfig {
    std::filesystem::path data_dir = "var";
    std::filesystem::path source_db;    // default <data_dir>/sources.db
    std::filesystem::path vector_dir;   // default <data_dir>/vectors (cursor.json lives here too)
    std::filesystem::path session_dir;  // default <data_dir>/sessions
    EmbeddingSettings embedding;
    chat::LlmConfig llm;
    retriever::RetrieverOptions retrieval;
    chat::PromptOptions prompt;
    textprep::SplitOptions chunk;
    ingest::FetchOptions fetch;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string admin_token;  // empty = admin endpoints open; CAMPUSRAG_ADMIN_TOKEN overrides
    std::string cors_origin = "*";
    std::size_t max_message_bytes = 4096;

    // Fills derived paths and applies EMBED_* / LLM_* / CAMPUSRAG_ADMIN_TOKEN.
    void finalize();
    // Throws ConfigError naming the offending field.
    void validate() const;
    // Secrets (the admin token) are left out.
    nlohmann::json to_json() const;
};

class ConfigError : public InvalidInput {
public:
    ConfigError(std::string field, const std::string& what)
        : InvalidInput("config field '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Relative paths are resolved against `base_dir`. Unknown keys are rejected.
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& file);

std::unique_ptr<embed::EmbeddingProvider> make_provider(const EmbeddingSettings& settings);

class NotFound : public Error {
public:
    using Error::Error;
};

// Raised for writes while the vector store could not be loaded at startup.
class Unavailable : public Error {
public:
    using Error::Error;
};

struct Job {
    std::string id;
    std::string kind;
    std::string status;  // "running", "succeeded", "failed"
    nlohmann::json result;
    std::string error;
};

class JobRegistry {
public:
    std::string create(const std::string& kind);
    void succeed(const std::string& id, nlohmann::json result);
    void fail(const std::string& id, const std::string& error);
    std::optional<Job> get(const std::string& id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, Job> jobs_;
    std::size_t next_ = 1;
};

// Replacement collaborators, mainly for tests; null members are built from the config.
struct Collaborators {
    std::unique_ptr<embed::EmbeddingProvider> provider;
    std::unique_ptr<chat::ChatCompletionClient> llm;
    std::unique_ptr<ingest::Fetcher> fetcher;
};

struct ChatOutcome {
    std::string session_id;
    chat::ChatReply reply;
};

/// The assembled system: stores, sync pipeline, retriever and chat.
/// Ingest and sync share one job slot, so they never overlap; retrieval and
/// chat read immutable snapshots and run alongside them.
class App {
public:
    explicit App(AppConfig config, Collaborators collaborators = {});
    ~App();

    std::vector<retriever::ScoredDoc> search(const std::string& query, std::size_t k,
                                             std::optional<double> lambda = {}) const;
    // Creates a session when `session_id` is empty; NotFound for an unknown one.
    ChatOutcome chat(const std::optional<std::string>& session_id, const std::string& message);

    ingest::IngestStats ingest_csv(std::string_view csv, const std::string& table,
                                   const std::vector<std::string>& natural_key);
    std::vector<ingest::UrlReport> ingest_web(std::string_view url_list);
    // Throws SyncBusy when another sync is running.
    syncpipe::SyncStats sync();

    // Background variants; they return a job id for GET /jobs/{id}.
    std::string start_sync_job();
    std::string start_web_job(std::string url_list);

    nlohmann::json health() const;

    const AppConfig& config() const noexcept { return config_; }
    const JobRegistry& jobs() const noexcept { return jobs_; }
    chat::SessionStore& sessions() noexcept { return *sessions_; }
    ingest::SourceStore& sources() noexcept { return *sources_; }
    const vecstore::VectorStore& vectors() const noexcept { return *vectors_; }
    const embed::EmbeddingProvider& provider() const noexcept { return *provider_; }
    bool degraded() const noexcept { return !degraded_reason_.empty(); }

private:
    syncpipe::SyncStats sync_locked();
    void require_writable() const;

    AppConfig config_;
    std::unique_ptr<embed::EmbeddingProvider> provider_;
    std::unique_ptr<chat::ChatCompletionClient> llm_;
    std::unique_ptr<ingest::Fetcher> fetcher_;
    std::unique_ptr<ingest::SourceStore> sources_;
    std::unique_ptr<vecstore::VectorStore> vectors_;
    std::string degraded_reason_;
    std::unique_ptr<syncpipe::SyncPipeline> pipeline_;
    std::unique_ptr<retriever::HybridRetriever> retriever_;
    std::unique_ptr<chat::SessionStore> sessions_;
    JobRegistry jobs_;
    std::binary_semaphore job_slot_{1};
    std::mutex workers_mutex_;
    std::vector<std::jthread> workers_;  // last: joined before anything they use is destroyed
};

/// JSON-over-HTTP front end for an App. Errors are always {"code", "message"}.
class HttpServer {
public:
    explicit HttpServer(App& app);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds (port 0 picks a free port), serves on a background thread and
    // returns the bound port.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace campusrag::service
