#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "campusrag/common.hpp"
#include "campusrag/retriever.hpp"

namespace campusrag::chat {

enum class Role { System, User, Assistant };

const char* to_string(Role role);
Role role_from_string(std::string_view name);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    Timestamp at = 0;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatSession {
    std::string id;
    Timestamp created_at = 0;
    std::vector<ChatMessage> messages;  // user/assistant turns; the system message is not stored
};

/// Sessions in memory, each mirrored to an append-only `<id>.jsonl` file
/// (one header line, then one line per message) when a directory is given.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir = {}, Clock clock = system_now);

    std::string create();
    bool exists(const std::string& id) const;
    std::optional<ChatSession> get(const std::string& id) const;
    std::size_t size() const;

    // Appends and flushes to disk before returning.
    void append(const std::string& id, std::span<const ChatMessage> messages);

    // Held for the whole of one turn so turns within a session run one at a time.
    std::unique_lock<std::mutex> lock_turns(const std::string& id);

    Timestamp now() const { return clock_(); }

private:
    struct Entry {
        ChatSession session;
        std::mutex turn;
    };

    Entry* find(const std::string& id) const;
    void load_all();

    std::filesystem::path dir_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

struct SourceRef {
    std::string id;
    std::string table;
    std::string source_id;
    double combined = 0.0;

    bool operator==(const SourceRef&) const = default;
};

struct ContextBlock {
    int number = 0;  // 1-based, as shown in the prompt
    std::string text;
    SourceRef ref;
};

// Included verbatim in the system message.
extern const char* const kRefusalInstruction;
extern const char* const kNoSourcesNotice;

struct PromptOptions {
    std::size_t n_ctx = 5;
    std::size_t history_turns = 10;  // one turn = a user message and the reply
};

struct PromptBundle {
    std::string system;
    std::vector<ContextBlock> context;
    std::vector<ChatMessage> history;
    std::string query;

    // Numbered context blocks with their references, then the question.
    std::string user_message() const;
    // system, history..., user_message()
    std::vector<ChatMessage> messages() const;
    std::vector<SourceRef> sources() const;
};

std::string system_charter();

// `hits` must already be sorted by combined score, best first.
PromptBundle build_prompt(const ChatSession& session, const std::string& query,
                          std::span<const retriever::ScoredDoc> hits, const PromptOptions& options = {});

struct LlmConfig {
    std::string base_url;  // full chat-completions endpoint URL
    std::string model;
    std::string api_key_env = "LLM_API_KEY";
    double temperature = 0.2;
    int max_tokens = 512;
    std::chrono::milliseconds timeout{60000};

    // Overrides base_url / model from LLM_BASE_URL / LLM_MODEL when set.
    void apply_environment();
};

class ChatCompletionClient {
public:
    virtual ~ChatCompletionClient() = default;
    // Returns the assistant text. Throws RemoteError on any failure.
    virtual std::string complete(std::span<const ChatMessage> messages, const LlmConfig& config) const = 0;
};

/// POST {"model", "messages": [{"role", "content"}...], "temperature", "max_tokens"}
///   -> {"choices": [{"message": {"content": ...}}]}
/// The key is read from the configured environment variable per request and
/// only ever placed in the Authorization header.
class HttpChatClient final : public ChatCompletionClient {
public:
    std::string complete(std::span<const ChatMessage> messages, const LlmConfig& config) const override;
};

std::string completion_request_body(std::span<const ChatMessage> messages, const LlmConfig& config);
// Throws RemoteError (MalformedResponse) when the shape is wrong.
std::string parse_completion(std::string_view body);

struct FailureText {
    std::string message;  // shown to the user
    std::string code;     // machine-readable, e.g. "llm_timeout"
};

inline constexpr const char* kRetryMessage =
    "Sorry, I can't answer right now because the language service is unavailable. Please try again later.";
inline constexpr const char* kBusyMessage =
    "Sorry, the language service is busy at the moment. Please try again later.";

FailureText handle_failure(const std::exception& error);

struct ChatReply {
    std::string reply;
    std::vector<SourceRef> sources;
    bool ok = true;
    std::string error_code;  // set when !ok
};

// Sends the bundle, records the user message and the reply (or the fallback
// text on failure) in the session, and returns what the user should see.
// The caller holds sessions.lock_turns(session_id).
ChatReply generate_reply(SessionStore& sessions, const std::string& session_id, const PromptBundle& bundle,
                         const ChatCompletionClient& client, const LlmConfig& config);

// One full turn: retrieve, build the prompt from the current history, reply.
ChatReply answer(SessionStore& sessions, const std::string& session_id, const std::string& query,
                 const retriever::HybridRetriever& retriever, const ChatCompletionClient& client,
                 const LlmConfig& config, const PromptOptions& options = {});

}  // namespace campusrag::chat
