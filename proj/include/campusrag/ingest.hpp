#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "campusrag/common.hpp"

struct sqlite3;

namespace campusrag::ingest {

struct TableSchema {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::string> natural_key;

    // Throws InvalidInput: bad identifier, duplicate/empty/reserved column,
    // empty natural key or a key column missing from `columns`.
    void validate() const;
};

struct SourceRow {
    std::string table;
    std::string row_key;  // sha256 over the natural-key values
    std::map<std::string, std::string> fields;
    std::string row_hash;  // sha256 over every field value, in column order
    Timestamp ingested_at = 0;
};

// The change-detection columns of a row, without its fields.
struct RowStamp {
    std::string row_key;
    std::string row_hash;
    Timestamp ingested_at = 0;
};

struct IngestStats {
    std::size_t inserted = 0;
    std::size_t updated = 0;
    std::size_t unchanged = 0;
};

struct WebSnapshot {
    std::string url;
    std::string text;
    std::string content_hash;
    int version = 0;
    Timestamp fetched_at = 0;
};

struct SnapshotOutcome {
    enum class Kind { Unchanged, NewVersion };
    Kind kind = Kind::Unchanged;
    int version = 0;  // latest stored version after the call
};

// Table name under which the latest web snapshots are exposed as rows.
inline constexpr std::string_view kWebTable = "web";

// ---- CSV -----------------------------------------------------------------

struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

class CsvError : public InvalidInput {
public:
    CsvError(std::size_t record, const std::string& what);
    // 1-based record number; the header is record 1.
    std::size_t record() const noexcept { return record_; }

private:
    std::size_t record_;
};

// RFC 4180, UTF-8 only, optional BOM, CRLF or LF line ends.
CsvData parse_csv(std::string_view bytes);

// ---- text ----------------------------------------------------------------

// Visible text of an HTML document: script/style/noscript/template bodies
// dropped, tags stripped, entities decoded, whitespace collapsed and trimmed.
// Never fails; malformed markup gets a best-effort result.
std::string extract_text(std::string_view html);

// Lowercase hex SHA-256 of the bytes.
std::string content_hash(std::string_view text);

std::string row_key_of(std::span<const std::string> key_values);
std::string row_hash_of(std::span<const std::string> values);

// ---- store ---------------------------------------------------------------

/// Single-file relational store (SQLite, WAL mode). One table per CSV source
/// plus a versioned web snapshot table. All writes go through one writer
/// connection; reads use a separate connection and only see committed data.
class SourceStore {
public:
    explicit SourceStore(const std::filesystem::path& db_path, Clock clock = system_now);
    ~SourceStore();
    SourceStore(const SourceStore&) = delete;
    SourceStore& operator=(const SourceStore&) = delete;

    // Validates rows against the schema (creating the table on first use)
    // and applies insert/update/unchanged in one transaction.
    IngestStats ingest(const TableSchema& schema, const CsvData& csv);

    std::optional<TableSchema> schema(const std::string& table) const;
    std::vector<TableSchema> tables() const;
    std::optional<SourceRow> row(const std::string& table, const std::string& row_key) const;
    std::size_t row_count(const std::string& table) const;
    bool row_exists(const std::string& table, const std::string& row_key) const;

    // Rows with ingested_at >= since ordered by (ingested_at, row_key).
    // For kWebTable these are the latest snapshot of every URL.
    std::vector<SourceRow> rows_since(const std::string& table, Timestamp since) const;
    // Same rows and order as rows_since, stamps only.
    std::vector<RowStamp> stamps_since(const std::string& table, Timestamp since) const;

    SnapshotOutcome record_snapshot(const std::string& url, const std::string& text);
    std::vector<WebSnapshot> snapshots(const std::string& url) const;
    std::optional<WebSnapshot> latest_snapshot(const std::string& url) const;
    std::size_t url_count() const;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    Clock clock_;
    sqlite3* writer_ = nullptr;
    sqlite3* reader_ = nullptr;
    mutable std::mutex write_mutex_;
    mutable std::mutex read_mutex_;
};

IngestStats ingest_csv(SourceStore& store, std::string_view csv_bytes, const std::string& table,
                       const std::vector<std::string>& natural_key);

// ---- web -----------------------------------------------------------------

struct FetchResponse {
    int status = 0;
    std::string body;
};

class Fetcher {
public:
    virtual ~Fetcher() = default;
    // Throws RemoteError on transport failure or timeout.
    virtual FetchResponse fetch(const std::string& url, std::chrono::milliseconds timeout) const = 0;
};

class HttpFetcher final : public Fetcher {
public:
    FetchResponse fetch(const std::string& url, std::chrono::milliseconds timeout) const override;
};

struct FetchOptions {
    std::size_t max_in_flight = 8;
    std::chrono::milliseconds timeout{15000};
};

struct UrlReport {
    enum class Status { NewVersion, Unchanged, Invalid, Failed };
    std::size_t line = 0;  // 1-based line in the list file
    std::string url;
    Status status = Status::Failed;
    int version = 0;
    std::string error;
};

const char* to_string(UrlReport::Status status);

// One URL per line; blank lines and '#' comments skipped. Reports come back
// in input order; a bad line or failed fetch never stops the others.
std::vector<UrlReport> fetch_urls(SourceStore& store, const Fetcher& fetcher, std::string_view url_list,
                                  const FetchOptions& options = {});

}  // namespace campusrag::ingest
