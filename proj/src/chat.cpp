#include "campusrag/chat.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace campusrag::chat {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw InvalidInput("unknown role '" + std::string(name) + "'");
}

// ---- sessions ----------------------------------------------------------------

namespace {

std::string random_id() {
    static std::mutex m;
    static std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(m);
    std::ostringstream s;
    s << std::hex << std::setfill('0') << std::setw(16) << gen() << std::setw(16) << gen();
    return s.str();
}

bool valid_session_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
    return true;
}

json message_json(const ChatMessage& m) { return {{"role", to_string(m.role)}, {"content", m.content}, {"at", m.at}}; }

void append_lines(const fs::path& file, const std::vector<json>& lines) {
    std::ofstream out(file, std::ios::app);
    for (const auto& l : lines) out << l.dump() << '\n';
    out.flush();
    if (!out) throw StoreError("cannot append to session file " + file.string());
}

}  // namespace

SessionStore::SessionStore(fs::path dir, Clock clock) : dir_(std::move(dir)), clock_(std::move(clock)) {
    if (!dir_.empty()) {
        fs::create_directories(dir_);
        load_all();
    }
}

void SessionStore::load_all() {
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() != ".jsonl") continue;
        std::ifstream in(entry.path());
        std::string line;
        auto e = std::make_unique<Entry>();
        bool header = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception&) {
                // A torn final line from a crash mid-write; keep what came before.
                spdlog::warn("session file {}: skipping unreadable line", entry.path().string());
                continue;
            }
            if (header) {
                e->session.id = j.at("session").get<std::string>();
                e->session.created_at = j.at("created_at").get<Timestamp>();
                header = false;
                continue;
            }
            e->session.messages.push_back(
                {role_from_string(j.at("role").get<std::string>()), j.at("content").get<std::string>(),
                 j.at("at").get<Timestamp>()});
        }
        if (!header) {
            std::string id = e->session.id;
            sessions_.emplace(std::move(id), std::move(e));
        }
    }
}

std::string SessionStore::create() {
    std::lock_guard lock(mutex_);
    std::string id;
    do id = random_id();
    while (sessions_.count(id));
    auto e = std::make_unique<Entry>();
    e->session.id = id;
    e->session.created_at = clock_();
    if (!dir_.empty())
        append_lines(dir_ / (id + ".jsonl"), {json{{"session", id}, {"created_at", e->session.created_at}}});
    sessions_.emplace(id, std::move(e));
    return id;
}

SessionStore::Entry* SessionStore::find(const std::string& id) const {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

bool SessionStore::exists(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return find(id) != nullptr;
}

std::optional<ChatSession> SessionStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    if (auto* e = find(id)) return e->session;
    return std::nullopt;
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

void SessionStore::append(const std::string& id, std::span<const ChatMessage> messages) {
    std::lock_guard lock(mutex_);
    auto* e = find(id);
    if (!e) throw InvalidInput("unknown session '" + id + "'");
    for (const auto& m : messages)
        if (m.content.empty()) throw InvalidInput("chat messages must not be empty");
    if (!dir_.empty() && valid_session_id(id)) {
        std::vector<json> lines;
        for (const auto& m : messages) lines.push_back(message_json(m));
        append_lines(dir_ / (id + ".jsonl"), lines);
    }
    e->session.messages.insert(e->session.messages.end(), messages.begin(), messages.end());
}

std::unique_lock<std::mutex> SessionStore::lock_turns(const std::string& id) {
    Entry* e = nullptr;
    {
        std::lock_guard lock(mutex_);
        e = find(id);
    }
    if (!e) throw InvalidInput("unknown session '" + id + "'");
    return std::unique_lock(e->turn);
}

// ---- prompt --------------------------------------------------------------------

const char* const kRefusalInstruction =
    "Respond only from the provided context; if the answer is not in the context, say you don't know.";
const char* const kNoSourcesNotice = "No sources were found for this question.";

std::string system_charter() {
    return std::string(
               "You are the campus assistant for a university. You answer questions from students about courses, "
               "prerequisites, class schedules, faculty members and university services. ") +
           kRefusalInstruction +
           " When you use a context block, cite it by its number in square brackets, for example [1]. Keep answers "
           "short and factual.";
}

std::string PromptBundle::user_message() const {
    std::ostringstream out;
    out << "Context:\n";
    if (context.empty()) out << kNoSourcesNotice << "\n";
    for (const auto& b : context) {
        out << "[" << b.number << "] (source: " << b.ref.id << "; table: " << b.ref.table
            << "; source_id: " << b.ref.source_id << "; score: " << std::fixed << std::setprecision(4)
            << b.ref.combined << ")\n"
            << b.text << "\n\n";
    }
    out << "\nQuestion: " << query;
    return out.str();
}

std::vector<ChatMessage> PromptBundle::messages() const {
    std::vector<ChatMessage> out;
    out.push_back({Role::System, system, 0});
    out.insert(out.end(), history.begin(), history.end());
    out.push_back({Role::User, user_message(), 0});
    return out;
}

std::vector<SourceRef> PromptBundle::sources() const {
    std::vector<SourceRef> out;
    for (const auto& b : context) out.push_back(b.ref);
    return out;
}

PromptBundle build_prompt(const ChatSession& session, const std::string& query,
                          std::span<const retriever::ScoredDoc> hits, const PromptOptions& options) {
    PromptBundle bundle;
    bundle.system = system_charter();
    bundle.query = query;
    const std::size_t n = std::min(options.n_ctx, hits.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& h = hits[i];
        bundle.context.push_back(
            {static_cast<int>(i + 1), h.document, {h.id, h.table, h.source_id, h.combined}});
    }
    const std::size_t keep = std::min(session.messages.size(), 2 * options.history_turns);
    bundle.history.assign(session.messages.end() - static_cast<std::ptrdiff_t>(keep), session.messages.end());
    return bundle;
}

// ---- completion ----------------------------------------------------------------

void LlmConfig::apply_environment() {
    if (const char* v = std::getenv("LLM_BASE_URL"); v && *v) base_url = v;
    if (const char* v = std::getenv("LLM_MODEL"); v && *v) model = v;
}

std::string completion_request_body(std::span<const ChatMessage> messages, const LlmConfig& config) {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return json{{"model", config.model},
                {"messages", msgs},
                {"temperature", config.temperature},
                {"max_tokens", config.max_tokens}}
        .dump();
}

std::string parse_completion(std::string_view body) {
    try {
        auto j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw RemoteError(RemoteError::Kind::MalformedResponse, "llm",
                          std::string("unexpected chat-completion response: ") + e.what());
    }
}

FailureText handle_failure(const std::exception& error) {
    FailureText out{kRetryMessage, "internal_error"};
    if (const auto* remote = dynamic_cast<const RemoteError*>(&error)) {
        switch (remote->kind()) {
            case RemoteError::Kind::Timeout: out.code = "llm_timeout"; break;
            case RemoteError::Kind::Transport: out.code = "llm_unreachable"; break;
            case RemoteError::Kind::RateLimited:
                out.code = "llm_rate_limited";
                out.message = kBusyMessage;
                break;
            case RemoteError::Kind::HttpStatus: out.code = "llm_unavailable"; break;
            case RemoteError::Kind::MalformedResponse: out.code = "llm_bad_response"; break;
        }
    }
    spdlog::warn("chat completion failed ({}): {}", out.code, error.what());
    return out;
}

namespace {

std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    auto first = s.find_first_not_of(ws);
    if (first == std::string::npos) return {};
    return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

}  // namespace

ChatReply generate_reply(SessionStore& sessions, const std::string& session_id, const PromptBundle& bundle,
                         const ChatCompletionClient& client, const LlmConfig& config) {
    if (trim(bundle.query).empty()) throw InvalidInput("message must not be empty");
    ChatReply out;
    out.sources = bundle.sources();
    try {
        out.reply = trim(client.complete(bundle.messages(), config));
        if (out.reply.empty())
            throw RemoteError(RemoteError::Kind::MalformedResponse, "llm", "empty completion");
    } catch (const std::exception& e) {
        auto failure = handle_failure(e);
        out.ok = false;
        out.reply = failure.message;
        out.error_code = failure.code;
    }
    const Timestamp now = sessions.now();
    const ChatMessage turn_messages[] = {{Role::User, bundle.query, now}, {Role::Assistant, out.reply, now}};
    sessions.append(session_id, turn_messages);
    return out;
}

ChatReply answer(SessionStore& sessions, const std::string& session_id, const std::string& query,
                 const retriever::HybridRetriever& retriever, const ChatCompletionClient& client,
                 const LlmConfig& config, const PromptOptions& options) {
    if (trim(query).empty()) throw InvalidInput("message must not be empty");
    auto turn = sessions.lock_turns(session_id);
    auto session = sessions.get(session_id);
    if (!session) throw InvalidInput("unknown session '" + session_id + "'");
    auto hits = retriever.retrieve(query, std::max<std::size_t>(options.n_ctx, 1));
    return generate_reply(sessions, session_id, build_prompt(*session, query, hits, options), client, config);
}

}  // namespace campusrag::chat
