#include <openssl/evp.h>
#include <sqlite3.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <map>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "campusrag/ingest.hpp"
#include "campusrag/url.hpp"

namespace campusrag::ingest {

using json = nlohmann::json;

std::string content_hash(std::string_view text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

namespace {

// Length-prefixed so ("ab","c") and ("a","bc") hash differently.
std::string framed(std::span<const std::string> values) {
    std::string buf;
    for (const auto& v : values) {
        buf += std::to_string(v.size());
        buf += ':';
        buf += v;
    }
    return buf;
}

}  // namespace

std::string row_key_of(std::span<const std::string> key_values) { return content_hash(framed(key_values)); }
std::string row_hash_of(std::span<const std::string> values) { return content_hash(framed(values)); }

namespace {

constexpr std::array<std::string_view, 3> kReservedColumns{"_row_key", "_row_hash", "_ingested_at"};

bool is_identifier(std::string_view s) {
    if (s.empty() || s.size() > 64) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::string quote_ident(std::string_view name) {
    std::string q = "\"";
    for (char c : name) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

class Statement {
public:
    Statement(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK)
            throw StoreError(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db) + " in: " + std::string(sql));
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int idx, std::string_view text) {
        check(sqlite3_bind_text(stmt_, idx, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int idx, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, idx, v));
        return *this;
    }

    // True while a row is available.
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("sqlite step failed: ") + sqlite3_errmsg(db_));
    }
    void reset() {
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::string text(int col) const {
        auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }
    std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) throw StoreError(std::string("sqlite bind failed: ") + sqlite3_errmsg(db_));
    }
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw StoreError("sqlite exec failed: " + msg);
    }
}

class Transaction {
public:
    explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
    ~Transaction() {
        if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        exec(db_, "COMMIT");
        done_ = true;
    }

private:
    sqlite3* db_;
    bool done_ = false;
};

sqlite3* open_db(const std::filesystem::path& path, bool readonly) {
    sqlite3* db = nullptr;
    int flags = readonly ? SQLITE_OPEN_READONLY : (SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
    flags |= SQLITE_OPEN_NOMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db, flags, nullptr) != SQLITE_OK) {
        std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
        sqlite3_close(db);
        throw StoreError("cannot open " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db, 10000);
    return db;
}

std::optional<TableSchema> load_schema(sqlite3* db, const std::string& table) {
    Statement st(db, "SELECT columns, natural_key FROM _schemas WHERE name = ?");
    st.bind(1, table);
    if (!st.step()) return std::nullopt;
    TableSchema s;
    s.name = table;
    s.columns = json::parse(st.text(0)).get<std::vector<std::string>>();
    s.natural_key = json::parse(st.text(1)).get<std::vector<std::string>>();
    return s;
}

SourceRow web_row(const WebSnapshot& snap) {
    SourceRow row;
    row.table = std::string(kWebTable);
    row.row_key = content_hash(snap.url);
    row.fields = {{"url", snap.url}, {"text", snap.text}, {"version", std::to_string(snap.version)}};
    row.row_hash = snap.content_hash;
    row.ingested_at = snap.fetched_at;
    return row;
}

WebSnapshot snapshot_from(const Statement& st) {
    return WebSnapshot{st.text(0), st.text(1), st.text(2), static_cast<int>(st.int64(3)), st.int64(4)};
}

}  // namespace

void TableSchema::validate() const {
    if (!is_identifier(name))
        throw InvalidInput("table name '" + name + "' must start with a letter and contain only letters, digits, '_'");
    if (name == kWebTable) throw InvalidInput("table name 'web' is reserved for web snapshots");
    if (columns.empty()) throw InvalidInput("table '" + name + "' has no columns");
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (c.empty()) throw InvalidInput("table '" + name + "' has an empty column name");
        if (std::find(kReservedColumns.begin(), kReservedColumns.end(), c) != kReservedColumns.end())
            throw InvalidInput("column name '" + c + "' is reserved");
        if (!seen.insert(c).second) throw InvalidInput("duplicate column '" + c + "' in table '" + name + "'");
    }
    if (natural_key.empty()) throw InvalidInput("table '" + name + "' needs a non-empty natural key");
    for (const auto& k : natural_key)
        if (!seen.count(k)) throw InvalidInput("natural key column '" + k + "' is not in the header of '" + name + "'");
}

SourceStore::SourceStore(const std::filesystem::path& db_path, Clock clock)
    : path_(db_path), clock_(std::move(clock)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    writer_ = open_db(path_, false);
    try {
        exec(writer_, "PRAGMA journal_mode=WAL");
        exec(writer_, "PRAGMA synchronous=NORMAL");
        exec(writer_,
             "CREATE TABLE IF NOT EXISTS _schemas (name TEXT PRIMARY KEY, columns TEXT NOT NULL, "
             "natural_key TEXT NOT NULL, created_at INTEGER NOT NULL)");
        exec(writer_,
             "CREATE TABLE IF NOT EXISTS _web_snapshots (url TEXT NOT NULL, version INTEGER NOT NULL, "
             "text TEXT NOT NULL, content_hash TEXT NOT NULL, fetched_at INTEGER NOT NULL, "
             "PRIMARY KEY (url, version))");
        reader_ = open_db(path_, true);
    } catch (...) {
        sqlite3_close(writer_);
        throw;
    }
}

SourceStore::~SourceStore() {
    sqlite3_close(reader_);
    sqlite3_close(writer_);
}

IngestStats SourceStore::ingest(const TableSchema& schema, const CsvData& csv) {
    schema.validate();
    if (csv.header != schema.columns) throw InvalidInput("csv header does not match the schema columns");

    std::vector<std::size_t> key_idx;
    for (const auto& k : schema.natural_key)
        key_idx.push_back(static_cast<std::size_t>(
            std::find(schema.columns.begin(), schema.columns.end(), k) - schema.columns.begin()));

    // Resolve identities up front so a bad file is rejected before any write.
    struct Prepared {
        std::string key;
        std::string hash;
        const std::vector<std::string>* values;
    };
    std::vector<Prepared> prepared;
    std::map<std::string, std::size_t> first_seen;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        std::vector<std::string> key_values;
        for (auto idx : key_idx) key_values.push_back(csv.rows[r][idx]);
        std::string key = row_key_of(key_values);
        auto [it, fresh] = first_seen.emplace(key, r + 2);
        if (!fresh)
            throw CsvError(r + 2, "duplicate natural key (same as record " + std::to_string(it->second) + ")");
        prepared.push_back({std::move(key), row_hash_of(csv.rows[r]), &csv.rows[r]});
    }

    std::lock_guard lock(write_mutex_);
    Transaction tx(writer_);
    if (auto existing = load_schema(writer_, schema.name)) {
        if (existing->columns != schema.columns)
            throw InvalidInput("csv header does not match existing table '" + schema.name + "'");
        if (existing->natural_key != schema.natural_key)
            throw InvalidInput("natural key differs from the one table '" + schema.name + "' was created with");
    } else {
        std::string ddl = "CREATE TABLE " + quote_ident(schema.name) +
                          " (_row_key TEXT PRIMARY KEY, _row_hash TEXT NOT NULL, _ingested_at INTEGER NOT NULL";
        for (const auto& c : schema.columns) ddl += ", " + quote_ident(c) + " TEXT";
        ddl += ")";
        exec(writer_, ddl);
        exec(writer_, "CREATE INDEX " + quote_ident("idx_" + schema.name + "_ingested") + " ON " +
                          quote_ident(schema.name) + " (_ingested_at, _row_key)");
        Statement ins(writer_, "INSERT INTO _schemas (name, columns, natural_key, created_at) VALUES (?, ?, ?, ?)");
        ins.bind(1, schema.name)
            .bind(2, json(schema.columns).dump())
            .bind(3, json(schema.natural_key).dump())
            .bind(4, clock_());
        ins.step();
    }

    // Per-table monotonic: never stamp earlier than anything already stored.
    Timestamp now = clock_();
    {
        Statement mx(writer_, "SELECT MAX(_ingested_at) FROM " + quote_ident(schema.name));
        if (mx.step() && !mx.is_null(0)) now = std::max(now, mx.int64(0));
    }

    const std::string table = quote_ident(schema.name);
    std::string cols, placeholders, assignments;
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        cols += ", " + quote_ident(schema.columns[i]);
        placeholders += ", ?";
        assignments += ", " + quote_ident(schema.columns[i]) + " = ?" + std::to_string(i + 4);
    }
    Statement lookup(writer_, "SELECT _row_hash FROM " + table + " WHERE _row_key = ?");
    Statement insert(writer_, "INSERT INTO " + table + " (_row_key, _row_hash, _ingested_at" + cols +
                                  ") VALUES (?, ?, ?" + placeholders + ")");
    Statement update(writer_, "UPDATE " + table + " SET _row_hash = ?2, _ingested_at = ?3" + assignments +
                                  " WHERE _row_key = ?1");

    IngestStats stats;
    for (const auto& p : prepared) {
        lookup.reset();
        lookup.bind(1, p.key);
        std::optional<std::string> stored;
        if (lookup.step()) stored = lookup.text(0);
        lookup.reset();
        if (stored && *stored == p.hash) {
            ++stats.unchanged;
            continue;
        }
        Statement& st = stored ? update : insert;
        st.reset();
        st.bind(1, p.key).bind(2, p.hash).bind(3, now);
        for (std::size_t i = 0; i < p.values->size(); ++i) st.bind(static_cast<int>(i + 4), (*p.values)[i]);
        st.step();
        ++(stored ? stats.updated : stats.inserted);
    }
    tx.commit();
    return stats;
}

std::optional<TableSchema> SourceStore::schema(const std::string& table) const {
    std::lock_guard lock(read_mutex_);
    return load_schema(reader_, table);
}

std::vector<TableSchema> SourceStore::tables() const {
    std::vector<std::string> names;
    {
        std::lock_guard lock(read_mutex_);
        Statement st(reader_, "SELECT name FROM _schemas ORDER BY name");
        while (st.step()) names.push_back(st.text(0));
    }
    std::vector<TableSchema> out;
    for (const auto& n : names)
        if (auto s = schema(n)) out.push_back(std::move(*s));
    return out;
}

std::optional<SourceRow> SourceStore::row(const std::string& table, const std::string& row_key) const {
    if (table == kWebTable) {
        std::lock_guard lock(read_mutex_);
        Statement st(reader_,
                     "SELECT url, text, content_hash, version, fetched_at FROM _web_snapshots s "
                     "WHERE version = (SELECT MAX(version) FROM _web_snapshots WHERE url = s.url) "
                     "ORDER BY url");
        while (st.step()) {
            auto snap = snapshot_from(st);
            if (content_hash(snap.url) == row_key) return web_row(snap);
        }
        return std::nullopt;
    }
    auto s = schema(table);
    if (!s) return std::nullopt;
    std::lock_guard lock(read_mutex_);
    Statement st(reader_, "SELECT * FROM " + quote_ident(table) + " WHERE _row_key = ?");
    st.bind(1, row_key);
    if (!st.step()) return std::nullopt;
    SourceRow row{table, st.text(0), {}, st.text(1), st.int64(2)};
    for (std::size_t i = 0; i < s->columns.size(); ++i) row.fields[s->columns[i]] = st.text(static_cast<int>(i + 3));
    return row;
}

bool SourceStore::row_exists(const std::string& table, const std::string& row_key) const {
    return row(table, row_key).has_value();
}

std::size_t SourceStore::row_count(const std::string& table) const {
    if (table == kWebTable) return url_count();
    if (!schema(table)) return 0;
    std::lock_guard lock(read_mutex_);
    Statement st(reader_, "SELECT COUNT(*) FROM " + quote_ident(table));
    st.step();
    return static_cast<std::size_t>(st.int64(0));
}

std::vector<SourceRow> SourceStore::rows_since(const std::string& table, Timestamp since) const {
    std::vector<SourceRow> rows;
    if (table == kWebTable) {
        std::lock_guard lock(read_mutex_);
        Statement st(reader_,
                     "SELECT url, text, content_hash, version, fetched_at FROM _web_snapshots s "
                     "WHERE version = (SELECT MAX(version) FROM _web_snapshots WHERE url = s.url) "
                     "AND fetched_at >= ?");
        st.bind(1, since);
        while (st.step()) rows.push_back(web_row(snapshot_from(st)));
        std::sort(rows.begin(), rows.end(), [](const SourceRow& a, const SourceRow& b) {
            return a.ingested_at != b.ingested_at ? a.ingested_at < b.ingested_at : a.row_key < b.row_key;
        });
        return rows;
    }
    auto s = schema(table);
    if (!s) return rows;
    std::lock_guard lock(read_mutex_);
    Statement st(reader_, "SELECT * FROM " + quote_ident(table) +
                              " WHERE _ingested_at >= ? ORDER BY _ingested_at, _row_key");
    st.bind(1, since);
    while (st.step()) {
        SourceRow row{table, st.text(0), {}, st.text(1), st.int64(2)};
        for (std::size_t i = 0; i < s->columns.size(); ++i)
            row.fields[s->columns[i]] = st.text(static_cast<int>(i + 3));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<RowStamp> SourceStore::stamps_since(const std::string& table, Timestamp since) const {
    std::vector<RowStamp> stamps;
    if (table == kWebTable) {
        for (auto& r : rows_since(table, since))
            stamps.push_back({std::move(r.row_key), std::move(r.row_hash), r.ingested_at});
        return stamps;
    }
    if (!schema(table)) return stamps;
    std::lock_guard lock(read_mutex_);
    Statement st(reader_, "SELECT _row_key, _row_hash, _ingested_at FROM " + quote_ident(table) +
                              " WHERE _ingested_at >= ? ORDER BY _ingested_at, _row_key");
    st.bind(1, since);
    while (st.step()) stamps.push_back({st.text(0), st.text(1), st.int64(2)});
    return stamps;
}

SnapshotOutcome SourceStore::record_snapshot(const std::string& url, const std::string& text) {
    if (!parse_http_url(url)) throw InvalidInput("not an absolute http(s) URL: '" + url + "'");
    const std::string hash = content_hash(text);

    std::lock_guard lock(write_mutex_);
    Transaction tx(writer_);
    Statement latest(writer_,
                     "SELECT version, content_hash, fetched_at FROM _web_snapshots WHERE url = ? "
                     "ORDER BY version DESC LIMIT 1");
    latest.bind(1, url);
    int version = 0;
    Timestamp fetched_at = clock_();
    if (latest.step()) {
        version = static_cast<int>(latest.int64(0));
        if (latest.text(1) == hash) return {SnapshotOutcome::Kind::Unchanged, version};
        fetched_at = std::max(fetched_at, latest.int64(2));
    }
    Statement ins(writer_,
                  "INSERT INTO _web_snapshots (url, version, text, content_hash, fetched_at) VALUES (?, ?, ?, ?, ?)");
    ins.bind(1, url).bind(2, version + 1).bind(3, text).bind(4, hash).bind(5, fetched_at);
    ins.step();
    tx.commit();
    return {SnapshotOutcome::Kind::NewVersion, version + 1};
}

std::vector<WebSnapshot> SourceStore::snapshots(const std::string& url) const {
    std::lock_guard lock(read_mutex_);
    Statement st(reader_,
                 "SELECT url, text, content_hash, version, fetched_at FROM _web_snapshots WHERE url = ? "
                 "ORDER BY version");
    st.bind(1, url);
    std::vector<WebSnapshot> out;
    while (st.step()) out.push_back(snapshot_from(st));
    return out;
}

std::optional<WebSnapshot> SourceStore::latest_snapshot(const std::string& url) const {
    auto all = snapshots(url);
    if (all.empty()) return std::nullopt;
    return all.back();
}

std::size_t SourceStore::url_count() const {
    std::lock_guard lock(read_mutex_);
    Statement st(reader_, "SELECT COUNT(DISTINCT url) FROM _web_snapshots");
    st.step();
    return static_cast<std::size_t>(st.int64(0));
}

IngestStats ingest_csv(SourceStore& store, std::string_view csv_bytes, const std::string& table,
                       const std::vector<std::string>& natural_key) {
    CsvData csv = parse_csv(csv_bytes);
    TableSchema schema{table, csv.header, natural_key};
    schema.validate();
    return store.ingest(schema, csv);
}

const char* to_string(UrlReport::Status status) {
    switch (status) {
        case UrlReport::Status::NewVersion: return "new_version";
        case UrlReport::Status::Unchanged: return "unchanged";
        case UrlReport::Status::Invalid: return "invalid";
        case UrlReport::Status::Failed: return "failed";
    }
    return "unknown";
}

std::vector<UrlReport> fetch_urls(SourceStore& store, const Fetcher& fetcher, std::string_view url_list,
                                  const FetchOptions& options) {
    std::vector<UrlReport> reports;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= url_list.size()) {
        std::size_t nl = url_list.find('\n', pos);
        std::string_view line = url_list.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? url_list.size() + 1 : nl + 1;
        ++line_no;
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        UrlReport r;
        r.line = line_no;
        r.url = std::string(line);
        if (!parse_http_url(line)) {
            r.status = UrlReport::Status::Invalid;
            r.error = "not an absolute http(s) URL";
        }
        reports.push_back(std::move(r));
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < reports.size(); i = next++) {
            auto& r = reports[i];
            if (r.status == UrlReport::Status::Invalid) continue;
            try {
                FetchResponse resp = fetcher.fetch(r.url, options.timeout);
                if (resp.status < 200 || resp.status >= 300) {
                    r.status = UrlReport::Status::Failed;
                    r.error = "HTTP status " + std::to_string(resp.status);
                    continue;
                }
                // record_snapshot serializes on the store's writer lock.
                auto outcome = store.record_snapshot(r.url, extract_text(resp.body));
                r.version = outcome.version;
                r.status = outcome.kind == SnapshotOutcome::Kind::NewVersion ? UrlReport::Status::NewVersion
                                                                             : UrlReport::Status::Unchanged;
            } catch (const std::exception& e) {
                r.status = UrlReport::Status::Failed;
                r.error = e.what();
            }
        }
    };
    std::size_t workers = std::clamp<std::size_t>(options.max_in_flight, 1, std::max<std::size_t>(reports.size(), 1));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();
    return reports;
}

}  // namespace campusrag::ingest
