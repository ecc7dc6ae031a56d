#include "campusrag/service.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "campusrag/url.hpp"

namespace campusrag::service {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- config --------------------------------------------------------------------

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// anything left over (usually a typo) can be reported.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be an object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key), "has the wrong type");
        }
    }

    void read_ms(const std::string& key, std::chrono::milliseconds& out) {
        long long ms = out.count();
        read(key, ms);
        out = std::chrono::milliseconds(ms);
    }

    void read_path(const std::string& key, fs::path& out, const fs::path& base) {
        std::string s;
        read(key, s);
        if (s.empty()) return;
        fs::path p = s;
        out = p.is_relative() && !base.empty() ? base / p : p;
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        auto it = j_.find(key);
        return Section(it == j_.end() ? empty : *it, path(key));
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError(path(k), "unknown setting");
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

AppConfig config_from_json(const json& j, const fs::path& base_dir) {
    AppConfig c;
    Section root(j, "");
    c.data_dir = base_dir.empty() ? c.data_dir : base_dir / c.data_dir;
    root.read_path("data_dir", c.data_dir, base_dir);
    root.read_path("source_db", c.source_db, base_dir);
    root.read_path("vector_dir", c.vector_dir, base_dir);
    root.read_path("session_dir", c.session_dir, base_dir);

    auto e = root.child("embedding");
    e.read("provider", c.embedding.provider);
    e.read("dim", c.embedding.dim);
    e.read("seed", c.embedding.seed);
    e.read("synonyms", c.embedding.synonyms);
    e.read("base_url", c.embedding.base_url);
    e.read("model", c.embedding.model);
    e.read("api_key_env", c.embedding.api_key_env);
    e.read("batch_size", c.embedding.batch_size);
    e.read("max_in_flight", c.embedding.max_in_flight);
    e.read_ms("timeout_ms", c.embedding.timeout);
    e.finish();

    auto l = root.child("llm");
    l.read("base_url", c.llm.base_url);
    l.read("model", c.llm.model);
    l.read("api_key_env", c.llm.api_key_env);
    l.read("temperature", c.llm.temperature);
    l.read("max_tokens", c.llm.max_tokens);
    l.read_ms("timeout_ms", c.llm.timeout);
    l.finish();

    auto r = root.child("retrieval");
    r.read("lambda", c.retrieval.lambda);
    r.read("bm25_k", c.retrieval.bm25_k);
    r.read("vector_k", c.retrieval.vector_k);
    r.read("k1", c.retrieval.bm25.k1);
    r.read("b", c.retrieval.bm25.b);
    r.read("n_ctx", c.prompt.n_ctx);
    r.read("history_turns", c.prompt.history_turns);
    r.finish();

    auto ch = root.child("chunk");
    ch.read("size", c.chunk.chunk_size);
    ch.read("overlap", c.chunk.overlap);
    ch.finish();

    auto f = root.child("fetch");
    f.read("max_in_flight", c.fetch.max_in_flight);
    f.read_ms("timeout_ms", c.fetch.timeout);
    f.finish();

    auto s = root.child("server");
    s.read("host", c.host);
    s.read("port", c.port);
    s.read("admin_token", c.admin_token);
    s.read("cors_origin", c.cors_origin);
    s.read("max_message_bytes", c.max_message_bytes);
    s.finish();

    root.finish();
    c.finalize();
    c.validate();
    return c;
}

AppConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("<file>", "cannot read " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
    }
    return config_from_json(j, file.parent_path());
}

void AppConfig::finalize() {
    if (source_db.empty()) source_db = data_dir / "sources.db";
    if (vector_dir.empty()) vector_dir = data_dir / "vectors";
    if (session_dir.empty()) session_dir = data_dir / "sessions";
    if (const char* v = std::getenv("EMBED_BASE_URL"); v && *v) embedding.base_url = v;
    if (const char* v = std::getenv("EMBED_MODEL"); v && *v) embedding.model = v;
    if (const char* v = std::getenv("CAMPUSRAG_ADMIN_TOKEN"); v && *v) admin_token = v;
    llm.apply_environment();
}

void AppConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ConfigError(field, what);
    };
    require(embedding.provider == "hashing" || embedding.provider == "http", "embedding.provider",
            "must be \"hashing\" or \"http\"");
    require(embedding.dim >= 8, "embedding.dim", "must be at least 8");
    if (embedding.provider == "http") {
        require(parse_http_url(embedding.base_url).has_value(), "embedding.base_url", "must be an http(s) URL");
        require(!embedding.model.empty(), "embedding.model", "must be set");
    }
    require(embedding.batch_size >= 1, "embedding.batch_size", "must be at least 1");
    require(embedding.max_in_flight >= 1 && embedding.max_in_flight <= 64, "embedding.max_in_flight",
            "must be in 1..64");
    require(embedding.timeout.count() > 0, "embedding.timeout_ms", "must be positive");
    require(llm.base_url.empty() || parse_http_url(llm.base_url).has_value(), "llm.base_url",
            "must be an http(s) URL");
    require(llm.temperature >= 0.0 && llm.temperature <= 2.0, "llm.temperature", "must be in [0, 2]");
    require(llm.max_tokens >= 1, "llm.max_tokens", "must be at least 1");
    require(llm.timeout.count() > 0, "llm.timeout_ms", "must be positive");
    require(retrieval.lambda >= 0.0 && retrieval.lambda <= 1.0, "retrieval.lambda", "must be in [0, 1]");
    require(retrieval.bm25_k >= 1, "retrieval.bm25_k", "must be at least 1");
    require(retrieval.vector_k >= 1, "retrieval.vector_k", "must be at least 1");
    require(retrieval.bm25.k1 >= 0.0, "retrieval.k1", "must not be negative");
    require(retrieval.bm25.b >= 0.0 && retrieval.bm25.b <= 1.0, "retrieval.b", "must be in [0, 1]");
    require(prompt.n_ctx >= 1, "retrieval.n_ctx", "must be at least 1");
    require(chunk.chunk_size >= 1, "chunk.size", "must be at least 1");
    require(chunk.overlap < chunk.chunk_size, "chunk.overlap", "must be smaller than chunk.size");
    require(fetch.max_in_flight >= 1, "fetch.max_in_flight", "must be at least 1");
    require(fetch.timeout.count() > 0, "fetch.timeout_ms", "must be positive");
    require(port >= 0 && port <= 65535, "server.port", "must be in 0..65535");
    require(!host.empty(), "server.host", "must be set");
    require(max_message_bytes >= 1, "server.max_message_bytes", "must be at least 1");
}

json AppConfig::to_json() const {
    return {
        {"data_dir", data_dir.string()},
        {"source_db", source_db.string()},
        {"vector_dir", vector_dir.string()},
        {"session_dir", session_dir.string()},
        {"embedding",
         {{"provider", embedding.provider},
          {"dim", embedding.dim},
          {"seed", embedding.seed},
          {"synonyms", embedding.synonyms},
          {"base_url", embedding.base_url},
          {"model", embedding.model},
          {"api_key_env", embedding.api_key_env},
          {"batch_size", embedding.batch_size},
          {"max_in_flight", embedding.max_in_flight},
          {"timeout_ms", embedding.timeout.count()}}},
        {"llm",
         {{"base_url", llm.base_url},
          {"model", llm.model},
          {"api_key_env", llm.api_key_env},
          {"temperature", llm.temperature},
          {"max_tokens", llm.max_tokens},
          {"timeout_ms", llm.timeout.count()}}},
        {"retrieval",
         {{"lambda", retrieval.lambda},
          {"bm25_k", retrieval.bm25_k},
          {"vector_k", retrieval.vector_k},
          {"k1", retrieval.bm25.k1},
          {"b", retrieval.bm25.b},
          {"n_ctx", prompt.n_ctx},
          {"history_turns", prompt.history_turns}}},
        {"chunk", {{"size", chunk.chunk_size}, {"overlap", chunk.overlap}}},
        {"fetch", {{"max_in_flight", fetch.max_in_flight}, {"timeout_ms", fetch.timeout.count()}}},
        {"server",
         {{"host", host}, {"port", port}, {"cors_origin", cors_origin}, {"max_message_bytes", max_message_bytes}}},
    };
}

std::unique_ptr<embed::EmbeddingProvider> make_provider(const EmbeddingSettings& s) {
    if (s.provider == "hashing") return std::make_unique<embed::HashingEmbedder>(s.dim, s.synonyms, s.seed);
    embed::HttpEmbeddingConfig http;
    http.base_url = s.base_url;
    http.model = s.model;
    http.api_key_env = s.api_key_env;
    http.dim = s.dim;
    http.batch_size = s.batch_size;
    http.max_in_flight = s.max_in_flight;
    http.timeout = s.timeout;
    return std::make_unique<embed::HttpEmbeddingProvider>(std::move(http));
}

// ---- jobs ----------------------------------------------------------------------

std::string JobRegistry::create(const std::string& kind) {
    std::lock_guard lock(mutex_);
    std::string id = kind + "-" + std::to_string(next_++);
    jobs_[id] = Job{id, kind, "running", nullptr, {}};
    return id;
}

void JobRegistry::succeed(const std::string& id, json result) {
    std::lock_guard lock(mutex_);
    auto& j = jobs_.at(id);
    j.status = "succeeded";
    j.result = std::move(result);
}

void JobRegistry::fail(const std::string& id, const std::string& error) {
    std::lock_guard lock(mutex_);
    auto& j = jobs_.at(id);
    j.status = "failed";
    j.error = error;
}

std::optional<Job> JobRegistry::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

// ---- app -----------------------------------------------------------------------

namespace {

json to_json(const syncpipe::SyncStats& s) {
    return {{"ok", s.ok()},
            {"rows_scanned", s.rows_scanned},
            {"rows_selected", s.rows_selected},
            {"docs_embedded", s.docs_embedded},
            {"upserted", s.upserted},
            {"removed", s.removed},
            {"elapsed_seconds", s.elapsed_seconds},
            {"failed_tables", s.failed_tables},
            {"errors", s.errors}};
}

json to_json(const std::vector<ingest::UrlReport>& reports) {
    json out = json::array();
    for (const auto& r : reports) {
        json item = {{"line", r.line}, {"url", r.url}, {"status", ingest::to_string(r.status)}};
        if (r.version > 0) item["version"] = r.version;
        if (!r.error.empty()) item["error"] = r.error;
        out.push_back(std::move(item));
    }
    return {{"reports", out}};
}

std::string trimmed(std::string_view s) {
    const char* ws = " \t\r\n";
    auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    return std::string(s.substr(first, s.find_last_not_of(ws) - first + 1));
}

struct SlotGuard {
    std::binary_semaphore& slot;
    ~SlotGuard() { slot.release(); }
};

}  // namespace

App::App(AppConfig config, Collaborators collaborators) : config_(std::move(config)) {
    config_.finalize();
    config_.validate();
    provider_ = collaborators.provider ? std::move(collaborators.provider) : make_provider(config_.embedding);
    llm_ = collaborators.llm ? std::move(collaborators.llm) : std::make_unique<chat::HttpChatClient>();
    fetcher_ = collaborators.fetcher ? std::move(collaborators.fetcher) : std::make_unique<ingest::HttpFetcher>();

    if (config_.source_db.has_parent_path()) fs::create_directories(config_.source_db.parent_path());
    sources_ = std::make_unique<ingest::SourceStore>(config_.source_db);

    if (vecstore::VectorStore::exists(config_.vector_dir)) {
        try {
            vectors_ = vecstore::VectorStore::load(config_.vector_dir);
        } catch (const StoreError& e) {
            degraded_reason_ = std::string("vector store unreadable: ") + e.what();
            spdlog::error("{}", degraded_reason_);
        }
        if (vectors_ && vectors_->fingerprint() != provider_->fingerprint())
            throw InvalidInput("vector store in " + config_.vector_dir.string() + " was built with '" +
                               vectors_->fingerprint() + "' but the configured provider is '" +
                               provider_->fingerprint() + "'; rebuild the store or restore the provider settings");
    }
    if (!vectors_) vectors_ = std::make_unique<vecstore::VectorStore>(provider_->dim(), provider_->fingerprint());

    if (!degraded()) {
        try {
            syncpipe::SyncOptions options;
            options.split = config_.chunk;
            options.embed_batch = config_.embedding.batch_size;
            pipeline_ = std::make_unique<syncpipe::SyncPipeline>(
                *sources_, *vectors_, *provider_, config_.vector_dir,
                syncpipe::Renderer(syncpipe::default_templates(), config_.chunk), options);
        } catch (const StoreError& e) {
            degraded_reason_ = std::string("sync cursor unreadable: ") + e.what();
            spdlog::error("{}", degraded_reason_);
        }
    }
    retriever_ = std::make_unique<retriever::HybridRetriever>(*vectors_, *provider_, config_.retrieval);
    sessions_ = std::make_unique<chat::SessionStore>(config_.session_dir);
}

App::~App() {
    std::lock_guard lock(workers_mutex_);
    workers_.clear();  // joins
}

void App::require_writable() const {
    if (degraded()) throw Unavailable(degraded_reason_);
}

std::vector<retriever::ScoredDoc> App::search(const std::string& query, std::size_t k,
                                              std::optional<double> lambda) const {
    return retriever_->retrieve(query, k, lambda.value_or(config_.retrieval.lambda));
}

ChatOutcome App::chat(const std::optional<std::string>& session_id, const std::string& message) {
    const std::string text = trimmed(message);
    if (text.empty()) throw InvalidInput("message must not be empty");
    if (message.size() > config_.max_message_bytes)
        throw InvalidInput("message is longer than " + std::to_string(config_.max_message_bytes) + " bytes");
    ChatOutcome out;
    if (session_id) {
        if (!sessions_->exists(*session_id)) throw NotFound("unknown session '" + *session_id + "'");
        out.session_id = *session_id;
    } else {
        out.session_id = sessions_->create();
    }
    out.reply = chat::answer(*sessions_, out.session_id, text, *retriever_, *llm_, config_.llm, config_.prompt);
    return out;
}

ingest::IngestStats App::ingest_csv(std::string_view csv, const std::string& table,
                                    const std::vector<std::string>& natural_key) {
    job_slot_.acquire();
    SlotGuard guard{job_slot_};
    return ingest::ingest_csv(*sources_, csv, table, natural_key);
}

std::vector<ingest::UrlReport> App::ingest_web(std::string_view url_list) {
    job_slot_.acquire();
    SlotGuard guard{job_slot_};
    return ingest::fetch_urls(*sources_, *fetcher_, url_list, config_.fetch);
}

syncpipe::SyncStats App::sync_locked() {
    auto stats = pipeline_->run();
    retriever_->rebuild();
    return stats;
}

syncpipe::SyncStats App::sync() {
    require_writable();
    if (!job_slot_.try_acquire()) throw syncpipe::SyncBusy();
    SlotGuard guard{job_slot_};
    return sync_locked();
}

std::string App::start_sync_job() {
    require_writable();
    if (!job_slot_.try_acquire()) throw syncpipe::SyncBusy();
    std::string id = jobs_.create("sync");
    std::lock_guard lock(workers_mutex_);
    workers_.emplace_back([this, id] {
        SlotGuard guard{job_slot_};
        try {
            jobs_.succeed(id, to_json(sync_locked()));
        } catch (const std::exception& e) {
            jobs_.fail(id, e.what());
        }
    });
    return id;
}

std::string App::start_web_job(std::string url_list) {
    std::string id = jobs_.create("ingest-web");
    std::lock_guard lock(workers_mutex_);
    workers_.emplace_back([this, id, list = std::move(url_list)] {
        try {
            jobs_.succeed(id, to_json(ingest_web(list)));
        } catch (const std::exception& e) {
            jobs_.fail(id, e.what());
        }
    });
    return id;
}

json App::health() const {
    json tables = json::object();
    std::string status = degraded() ? "degraded" : "ok";
    std::size_t urls = 0;
    try {
        for (const auto& t : sources_->tables()) tables[t.name] = sources_->row_count(t.name);
        urls = sources_->url_count();
    } catch (const std::exception& e) {
        status = "degraded";
        spdlog::error("health check: source store unreadable: {}", e.what());
    }
    json out = {{"status", status},
                {"versions",
                 {{"campusrag", kVersion},
                  {"vecstore_format", vecstore::StoreManifest::kFormatVersion},
                  {"embedding", provider_->fingerprint()}}},
                {"counts",
                 {{"vectors", vectors_->size()},
                  {"indexed", retriever_->size()},
                  {"sessions", sessions_->size()},
                  {"urls", urls},
                  {"tables", tables}}}};
    if (degraded()) out["reason"] = degraded_reason_;
    return out;
}

// ---- http ----------------------------------------------------------------------

namespace {

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send(res, status, {{"code", code}, {"message", message}});
}

json doc_json(const retriever::ScoredDoc& d, bool explain) {
    json j = {{"id", d.id},
              {"document", d.document},
              {"table", d.table},
              {"source_id", d.source_id},
              {"combined", d.combined}};
    if (explain) {
        j["bm25_raw"] = d.bm25_raw;
        j["bm25_norm"] = d.bm25_norm;
        j["distance"] = d.distance ? json(*d.distance) : json(nullptr);
        j["similarity"] = d.similarity;
    }
    return j;
}

json sources_json(const std::vector<chat::SourceRef>& refs) {
    json out = json::array();
    for (const auto& r : refs)
        out.push_back({{"id", r.id}, {"table", r.table}, {"source_id", r.source_id}, {"combined", r.combined}});
    return out;
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        auto item = trimmed(std::string_view(s).substr(start, comma == std::string::npos ? s.npos : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

bool constant_time_equal(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
    return diff == 0;
}

}  // namespace

struct HttpServer::Impl {
    App& app;
    httplib::Server server;
    std::thread thread;

    explicit Impl(App& a) : app(a) { routes(); }

    bool authorized(const httplib::Request& req, httplib::Response& res) const {
        const auto& token = app.config().admin_token;
        if (token.empty()) return true;
        std::string given = req.get_header_value("X-Admin-Token");
        if (given.empty()) {
            auto auth = req.get_header_value("Authorization");
            if (auth.rfind("Bearer ", 0) == 0) given = auth.substr(7);
        }
        if (constant_time_equal(given, token)) return true;
        send_error(res, 401, "unauthorized", "a valid admin token is required");
        return false;
    }

    // Runs a handler and turns exceptions into JSON errors.
    template <typename F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const ingest::CsvError& e) {
            send(res, 400, {{"code", "invalid_csv"}, {"message", e.what()}, {"record", e.record()}});
        } catch (const syncpipe::SyncBusy& e) {
            send_error(res, 409, "sync_running", e.what());
        } catch (const NotFound& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const Unavailable& e) {
            send_error(res, 503, "store_unavailable", e.what());
        } catch (const InvalidInput& e) {
            send_error(res, 400, "invalid_input", e.what());
        } catch (const std::exception& e) {
            spdlog::error("request failed: {}", e.what());
            send_error(res, 500, "internal_error", "the request could not be completed");
        }
    }

    void routes() {
        const std::string origin = app.config().cors_origin;
        server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
            if (origin.empty()) return;
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization, X-Admin-Token");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        });
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            if (res.status == 404)
                send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path);
            else
                send_error(res, res.status, "http_error", httplib::status_message(res.status));
            return httplib::Server::HandlerResponse::Handled;
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            send_error(res, 500, "internal_error", "the request could not be completed");
        });
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            spdlog::info("{} {} -> {}", req.method, req.path, res.status);
        });

        server.Post("/chat", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::exception&) {
                    return send_error(res, 400, "invalid_json", "request body must be a JSON object");
                }
                if (!body.is_object()) return send_error(res, 400, "invalid_json", "request body must be a JSON object");
                auto msg = body.find("message");
                if (msg == body.end() || !msg->is_string())
                    return send_error(res, 400, "missing_message", "\"message\" must be a string");
                std::optional<std::string> session;
                if (auto s = body.find("session_id"); s != body.end() && !s->is_null()) {
                    if (!s->is_string()) return send_error(res, 400, "invalid_input", "\"session_id\" must be a string");
                    session = s->get<std::string>();
                }
                auto outcome = app.chat(session, msg->get<std::string>());
                json out = {{"session_id", outcome.session_id},
                            {"reply", outcome.reply.reply},
                            {"sources", sources_json(outcome.reply.sources)}};
                if (outcome.reply.ok) return send(res, 200, out);
                out["code"] = outcome.reply.error_code;
                out["message"] = outcome.reply.reply;
                send(res, 503, out);
            });
        });

        server.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::string q = trimmed(req.get_param_value("q"));
                if (q.empty()) return send_error(res, 400, "missing_query", "query parameter q is required");
                long long k = 5;
                if (req.has_param("k")) {
                    const auto& raw = req.get_param_value("k");
                    std::size_t used = 0;
                    try {
                        k = std::stoll(raw, &used);
                    } catch (const std::exception&) {
                        used = 0;
                    }
                    if (used != raw.size() || raw.empty())
                        return send_error(res, 400, "invalid_k", "k must be an integer");
                }
                if (k < 1) return send_error(res, 400, "invalid_k", "k must be at least 1");
                std::optional<double> lambda;
                if (req.has_param("lambda")) {
                    try {
                        lambda = std::stod(req.get_param_value("lambda"));
                    } catch (const std::exception&) {
                        return send_error(res, 400, "invalid_lambda", "lambda must be a number in [0, 1]");
                    }
                    if (!(*lambda >= 0.0 && *lambda <= 1.0))
                        return send_error(res, 400, "invalid_lambda", "lambda must be a number in [0, 1]");
                }
                const bool explain = truthy(req.get_param_value("explain"));
                auto hits = app.search(q, static_cast<std::size_t>(k), lambda);
                json results = json::array();
                for (const auto& h : hits) results.push_back(doc_json(h, explain));
                send(res, 200,
                     {{"query", q},
                      {"k", k},
                      {"lambda", lambda.value_or(app.config().retrieval.lambda)},
                      {"results", results}});
            });
        });

        server.Post("/ingest/csv", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            guarded(res, [&] {
                std::string table = req.get_param_value("table");
                auto key = split_list(req.get_param_value("key"));
                if (table.empty()) return send_error(res, 400, "missing_table", "query parameter table is required");
                if (key.empty()) return send_error(res, 400, "missing_key", "query parameter key is required");
                auto stats = app.ingest_csv(req.body, table, key);
                send(res, 200,
                     {{"table", table},
                      {"inserted", stats.inserted},
                      {"updated", stats.updated},
                      {"unchanged", stats.unchanged}});
            });
        });

        server.Post("/ingest/web", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            guarded(res, [&] {
                if (truthy(req.get_param_value("async"))) {
                    auto id = app.start_web_job(req.body);
                    return send(res, 202, {{"job_id", id}, {"status_url", "/jobs/" + id}});
                }
                send(res, 200, to_json(app.ingest_web(req.body)));
            });
        });

        server.Post("/sync", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            guarded(res, [&] {
                if (truthy(req.get_param_value("async"))) {
                    auto id = app.start_sync_job();
                    return send(res, 202, {{"job_id", id}, {"status_url", "/jobs/" + id}});
                }
                send(res, 200, to_json(app.sync()));
            });
        });

        server.Get(R"(/jobs/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto job = app.jobs().get(req.matches[1]);
                if (!job) return send_error(res, 404, "unknown_job", "no job " + std::string(req.matches[1]));
                json out = {{"id", job->id}, {"kind", job->kind}, {"status", job->status}};
                if (!job->result.is_null()) out["result"] = job->result;
                if (!job->error.empty()) out["error"] = job->error;
                send(res, 200, out);
            });
        });

        server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { send(res, 200, app.health()); });
        });

        server.set_payload_max_length(64u << 20);
    }
};

HttpServer::HttpServer(App& app) : impl_(std::make_unique<Impl>(app)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : impl_->server.bind_to_port(host, port) ? port : -1;
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HttpServer::run(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace campusrag::service
