#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "campusrag/embed.hpp"
#include "campusrag/ingest.hpp"
#include "campusrag/textprep.hpp"
#include "campusrag/vecstore.hpp"

namespace campusrag::syncpipe {

struct RenderedDoc {
    std::string id;  // "<table>:<row_key>:<facet>:<chunk_index>"
    std::string text;
    vecstore::RecordMetadata metadata;
};

/// One sentence per facet; `{Column}` placeholders are filled from the row.
/// A facet whose placeholders hit an empty (or "None"/"null"/"n/a") value is
/// skipped.
struct FacetTemplate {
    std::string facet;
    std::string pattern;
};

using TemplateRegistry = std::map<std::string, std::vector<FacetTemplate>>;

// faculty, prerequisites, course_schedule, qa and web.
TemplateRegistry default_templates();

bool is_missing(std::string_view value);

class Renderer {
public:
    explicit Renderer(TemplateRegistry templates = default_templates(), textprep::SplitOptions split = {});

    // `columns` gives the order used by the "col: value; ..." fallback for
    // tables without a template.
    std::vector<RenderedDoc> render(const ingest::SourceRow& row, std::span<const std::string> columns,
                                    Timestamp rendered_at = 0) const;

    const TemplateRegistry& templates() const noexcept { return templates_; }

private:
    TemplateRegistry templates_;
    textprep::SplitOptions split_;
};

std::vector<RenderedDoc> render_row(const ingest::SourceRow& row, std::span<const std::string> columns);

/// Per-table sync position. Rows stamped after `timestamp` are new; rows
/// stamped exactly at `timestamp` are new unless their (row_key, row_hash)
/// is recorded, which keeps same-second updates from being missed.
struct TableCursor {
    Timestamp timestamp = 0;
    std::map<std::string, std::string> hashes_at_timestamp;

    bool selects(const ingest::SourceRow& row) const;
    bool selects(const ingest::RowStamp& stamp) const;

    bool operator==(const TableCursor&) const = default;
};

class IngestCursor {
public:
    const TableCursor* find(const std::string& table) const;
    bool selects(const std::string& table, const ingest::SourceRow& row) const;
    bool selects(const std::string& table, const ingest::RowStamp& stamp) const;
    void advance(const std::string& table, std::span<const ingest::SourceRow> synced);
    std::vector<std::string> tables() const;

    void save(const std::filesystem::path& file) const;  // atomic replace
    static IngestCursor load(const std::filesystem::path& file);  // missing file -> empty cursor

    bool operator==(const IngestCursor&) const = default;

private:
    std::map<std::string, TableCursor> tables_;
};

struct SyncOptions {
    textprep::SplitOptions split;
    std::size_t embed_batch = 64;
};

struct SyncStats {
    std::size_t rows_scanned = 0;
    std::size_t rows_selected = 0;
    std::size_t docs_embedded = 0;
    std::size_t upserted = 0;
    std::size_t removed = 0;
    double elapsed_seconds = 0.0;
    std::vector<std::string> failed_tables;
    std::vector<std::string> errors;

    bool ok() const noexcept { return failed_tables.empty(); }
};

// Thrown when a sync is requested while another one is running.
class SyncBusy : public Error {
public:
    SyncBusy() : Error("a sync job is already running") {}
};

/// Moves new and changed relational rows into the vector store. The cursor
/// for a table only advances when every selected row of that table was
/// embedded and upserted.
class SyncPipeline {
public:
    // `state_dir` holds the persisted vector store and cursor.json; an empty
    // path keeps everything in memory.
    SyncPipeline(ingest::SourceStore& sources, vecstore::VectorStore& vectors, const embed::EmbeddingProvider& provider,
                 std::filesystem::path state_dir = {}, Renderer renderer = Renderer(), SyncOptions options = {});

    SyncStats run();
    bool busy() const;

    IngestCursor cursor() const;
    static constexpr const char* kCursorFile = "cursor.json";

private:
    ingest::SourceStore& sources_;
    vecstore::VectorStore& vectors_;
    const embed::EmbeddingProvider& provider_;
    std::filesystem::path state_dir_;
    Renderer renderer_;
    SyncOptions options_;
    IngestCursor cursor_;
    mutable std::mutex job_;
    mutable std::mutex cursor_mutex_;
};

// ---- benchmark -----------------------------------------------------------

struct CorpusTable {
    std::string table;
    std::filesystem::path file;
    std::vector<std::string> natural_key;
};

// Reads `corpus.json` ([{"table", "file", "key": [...]}]) from the directory.
std::vector<CorpusTable> load_corpus_manifest(const std::filesystem::path& corpus_dir);

struct BenchPhase {
    std::string name;
    double ingest_seconds = 0.0;
    double sync_seconds = 0.0;
    std::size_t rows_changed = 0;   // inserted + updated during the ingest step
    std::size_t embed_calls = 0;    // texts sent to the embedding provider
    std::size_t rows_selected = 0;

    double total_seconds() const noexcept { return ingest_seconds + sync_seconds; }
};

struct BenchReport {
    BenchPhase fresh;
    BenchPhase update;
    BenchPhase noop;
    std::size_t rows_total = 0;
    std::size_t rows_modified = 0;
    std::size_t docs_from_modified_rows = 0;

    // t_fresh etc. are sync wall times.
    double t_fresh() const noexcept { return fresh.sync_seconds; }
    double t_update() const noexcept { return update.sync_seconds; }
    double t_noop() const noexcept { return noop.sync_seconds; }

    // phase,ingest_seconds,sync_seconds,total_seconds,rows_changed,rows_selected,embed_calls
    void write_csv(std::ostream& out) const;
};

struct BenchOptions {
    std::size_t modify_every = 10;  // every 10th row of each table -> 10%
    SyncOptions sync;
    TemplateRegistry templates = default_templates();
};

/// Fresh load, a run after editing every `modify_every`-th row, then a run
/// with nothing changed. Uses fresh stores under `work_dir`.
BenchReport bench_ingest(const std::filesystem::path& corpus_dir, const std::filesystem::path& work_dir,
                         const embed::EmbeddingProvider& provider, const BenchOptions& options = {});

}  // namespace campusrag::syncpipe
