#include "campusrag/syncpipe.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace campusrag::syncpipe {

namespace fs = std::filesystem;
using json = nlohmann::json;

TemplateRegistry default_templates() {
    return {
        {"prerequisites",
         {{"prerequisite", "Course {Course} has prerequisite {Pre-Requisite}."},
          {"chain", "Full prerequisite chain for {Course}: {Full Chain}."}}},
        {"faculty",
         {{"role", "{Name} ({Initial}) is a {Designation} ({Status}) whose office is room {Room}."},
          {"email", "The email address of {Name} ({Initial}) is {Email}."}}},
        {"course_schedule",
         {{"faculty", "Section {Section} of {Course} is taught by {Faculty}."},
          {"timing", "Section {Section} of {Course} meets on {Day} at {Time} in room {Room}."}}},
        {"qa", {{"qa", "Question: {Question} Answer: {Answer}"}}},
        {std::string(ingest::kWebTable), {{"page", "{text}"}}},
    };
}

bool is_missing(std::string_view value) {
    while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front()))) value.remove_prefix(1);
    while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back()))) value.remove_suffix(1);
    if (value.empty()) return true;
    std::string lower;
    for (char c : value) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return lower == "none" || lower == "null" || lower == "nan" || lower == "n/a";
}

namespace {

// nullopt when a placeholder refers to a missing value.
std::optional<std::string> fill(const std::string& pattern, const std::map<std::string, std::string>& fields) {
    std::string out;
    std::size_t i = 0;
    while (i < pattern.size()) {
        if (pattern[i] == '{') {
            std::size_t close = pattern.find('}', i + 1);
            if (close == std::string::npos) {
                out.append(pattern, i, std::string::npos);
                break;
            }
            auto it = fields.find(pattern.substr(i + 1, close - i - 1));
            if (it == fields.end() || is_missing(it->second)) return std::nullopt;
            out += it->second;
            i = close + 1;
        } else {
            out.push_back(pattern[i++]);
        }
    }
    return out;
}

}  // namespace

Renderer::Renderer(TemplateRegistry templates, textprep::SplitOptions split)
    : templates_(std::move(templates)), split_(split) {}

std::vector<RenderedDoc> Renderer::render(const ingest::SourceRow& row, std::span<const std::string> columns,
                                          Timestamp rendered_at) const {
    std::vector<std::pair<std::string, std::string>> facets;
    if (auto it = templates_.find(row.table); it != templates_.end()) {
        for (const auto& t : it->second)
            if (auto text = fill(t.pattern, row.fields)) facets.emplace_back(t.facet, std::move(*text));
    }
    if (facets.empty()) {
        std::string text;
        auto add = [&](const std::string& col, const std::string& value) {
            if (is_missing(value)) return;
            if (!text.empty()) text += "; ";
            text += col + ": " + value;
        };
        if (!columns.empty()) {
            for (const auto& c : columns)
                if (auto f = row.fields.find(c); f != row.fields.end()) add(c, f->second);
        } else {
            for (const auto& [c, v] : row.fields) add(c, v);
        }
        if (!text.empty()) facets.emplace_back("record", std::move(text));
    }

    std::vector<RenderedDoc> docs;
    for (auto& [facet, text] : facets) {
        auto make = [&](std::string body, std::size_t chunk) {
            RenderedDoc d;
            d.id = row.table + ":" + row.row_key + ":" + facet + ":" + std::to_string(chunk);
            d.text = std::move(body);
            d.metadata = {row.table, row.row_key, chunk, rendered_at};
            docs.push_back(std::move(d));
        };
        if (textprep::utf8::decode(text).size() <= split_.chunk_size) {
            make(std::move(text), 0);
        } else {
            for (auto& c : textprep::split_recursive(text, split_)) make(std::move(c.text), c.chunk_index);
        }
    }
    return docs;
}

std::vector<RenderedDoc> render_row(const ingest::SourceRow& row, std::span<const std::string> columns) {
    static const Renderer renderer;
    return renderer.render(row, columns);
}

// ---- cursor ----------------------------------------------------------------

bool TableCursor::selects(const ingest::RowStamp& stamp) const {
    if (stamp.ingested_at > timestamp) return true;
    if (stamp.ingested_at < timestamp) return false;
    auto it = hashes_at_timestamp.find(stamp.row_key);
    return it == hashes_at_timestamp.end() || it->second != stamp.row_hash;
}

bool TableCursor::selects(const ingest::SourceRow& row) const {
    return selects(ingest::RowStamp{row.row_key, row.row_hash, row.ingested_at});
}

const TableCursor* IngestCursor::find(const std::string& table) const {
    auto it = tables_.find(table);
    return it == tables_.end() ? nullptr : &it->second;
}

bool IngestCursor::selects(const std::string& table, const ingest::SourceRow& row) const {
    const TableCursor* c = find(table);
    return c == nullptr || c->selects(row);
}

bool IngestCursor::selects(const std::string& table, const ingest::RowStamp& stamp) const {
    const TableCursor* c = find(table);
    return c == nullptr || c->selects(stamp);
}

void IngestCursor::advance(const std::string& table, std::span<const ingest::SourceRow> synced) {
    if (synced.empty()) return;
    auto [it, fresh] = tables_.try_emplace(table);
    TableCursor& c = it->second;
    Timestamp max_ts = fresh ? std::numeric_limits<Timestamp>::min() : c.timestamp;
    for (const auto& r : synced) max_ts = std::max(max_ts, r.ingested_at);
    if (fresh || max_ts > c.timestamp) {
        c.timestamp = max_ts;
        c.hashes_at_timestamp.clear();
    }
    for (const auto& r : synced)
        if (r.ingested_at == max_ts) c.hashes_at_timestamp[r.row_key] = r.row_hash;
}

std::vector<std::string> IngestCursor::tables() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tables_) out.push_back(name);
    return out;
}

void IngestCursor::save(const fs::path& file) const {
    json j = json::object();
    for (const auto& [name, c] : tables_)
        j["tables"][name] = {{"timestamp", c.timestamp}, {"row_hashes", c.hashes_at_timestamp}};
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(2) << "\n";
        if (!out) throw StoreError("cannot write cursor file " + tmp.string());
    }
    fs::rename(tmp, file);
}

IngestCursor IngestCursor::load(const fs::path& file) {
    IngestCursor cursor;
    std::ifstream in(file);
    if (!in) return cursor;
    try {
        json j = json::parse(in);
        if (j.contains("tables")) {
            for (const auto& [name, c] : j["tables"].items()) {
                TableCursor tc;
                tc.timestamp = c.at("timestamp").get<Timestamp>();
                tc.hashes_at_timestamp = c.at("row_hashes").get<std::map<std::string, std::string>>();
                cursor.tables_[name] = std::move(tc);
            }
        }
    } catch (const json::exception& e) {
        throw StoreError("unreadable cursor file " + file.string() + ": " + e.what());
    }
    return cursor;
}

// ---- pipeline --------------------------------------------------------------

SyncPipeline::SyncPipeline(ingest::SourceStore& sources, vecstore::VectorStore& vectors,
                           const embed::EmbeddingProvider& provider, fs::path state_dir, Renderer renderer,
                           SyncOptions options)
    : sources_(sources),
      vectors_(vectors),
      provider_(provider),
      state_dir_(std::move(state_dir)),
      renderer_(std::move(renderer)),
      options_(options) {
    if (vectors_.fingerprint() != provider_.fingerprint())
        throw InvalidInput("vector store fingerprint '" + vectors_.fingerprint() +
                           "' does not match embedding provider '" + provider_.fingerprint() + "'");
    if (!state_dir_.empty()) cursor_ = IngestCursor::load(state_dir_ / kCursorFile);
}

bool SyncPipeline::busy() const {
    if (!job_.try_lock()) return true;
    job_.unlock();
    return false;
}

IngestCursor SyncPipeline::cursor() const {
    std::lock_guard lock(cursor_mutex_);
    return cursor_;
}

SyncStats SyncPipeline::run() {
    std::unique_lock job(job_, std::try_to_lock);
    if (!job.owns_lock()) throw SyncBusy();
    const auto started = std::chrono::steady_clock::now();
    SyncStats stats;
    IngestCursor cursor = this->cursor();
    const Timestamp now = system_now();

    std::vector<std::pair<std::string, std::vector<std::string>>> tables;
    for (auto& s : sources_.tables()) tables.emplace_back(s.name, s.columns);
    if (sources_.url_count() > 0) tables.emplace_back(std::string(ingest::kWebTable), std::vector<std::string>{});

    bool changed = false;
    for (const auto& [table, columns] : tables) {
        const TableCursor* tc = cursor.find(table);
        const Timestamp since = tc ? tc->timestamp : std::numeric_limits<Timestamp>::min();
        // Stamps first: an unchanged table costs one narrow query.
        auto stamps = sources_.stamps_since(table, since);
        stats.rows_scanned += stamps.size();
        if (std::none_of(stamps.begin(), stamps.end(), [&](const auto& s) { return cursor.selects(table, s); }))
            continue;
        auto candidates = sources_.rows_since(table, since);
        std::vector<ingest::SourceRow> selected;
        for (auto& r : candidates)
            if (cursor.selects(table, r)) selected.push_back(std::move(r));
        if (selected.empty()) continue;
        stats.rows_selected += selected.size();

        std::vector<std::vector<RenderedDoc>> per_row;
        std::vector<std::string> texts;
        for (const auto& row : selected) {
            per_row.push_back(renderer_.render(row, columns, now));
            for (const auto& d : per_row.back()) texts.push_back(d.text);
        }

        std::vector<embed::Vector> vectors;
        try {
            for (std::size_t i = 0; i < texts.size(); i += options_.embed_batch) {
                std::size_t n = std::min(options_.embed_batch, texts.size() - i);
                auto batch = embed::embed_texts(provider_, std::span<const std::string>(texts).subspan(i, n));
                stats.docs_embedded += n;
                for (auto& v : batch) vectors.push_back(std::move(v));
            }
        } catch (const std::exception& e) {
            stats.failed_tables.push_back(table);
            stats.errors.push_back(table + ": " + e.what());
            continue;  // cursor for this table stays put
        }

        std::size_t v = 0;
        for (std::size_t r = 0; r < selected.size(); ++r) {
            std::vector<vecstore::VectorRecord> records;
            std::vector<std::string> keep;
            for (auto& d : per_row[r]) {
                keep.push_back(d.id);
                records.push_back({d.id, std::move(vectors[v++]), std::move(d.text), std::move(d.metadata)});
            }
            stats.removed += vectors_.remove_source(table, selected[r].row_key, keep);
            auto up = vectors_.upsert(std::move(records));
            stats.upserted += up.inserted + up.replaced;
        }
        cursor.advance(table, selected);
        changed = true;
    }

    if (changed) {
        if (!state_dir_.empty()) {
            vectors_.persist(state_dir_);
            cursor.save(state_dir_ / kCursorFile);
        }
        std::lock_guard lock(cursor_mutex_);
        cursor_ = std::move(cursor);
    }
    stats.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return stats;
}

// ---- benchmark -------------------------------------------------------------

std::vector<CorpusTable> load_corpus_manifest(const fs::path& corpus_dir) {
    std::ifstream in(corpus_dir / "corpus.json");
    if (!in) throw InvalidInput("no corpus.json in " + corpus_dir.string());
    std::vector<CorpusTable> out;
    for (const auto& t : json::parse(in)) {
        out.push_back({t.at("table").get<std::string>(), corpus_dir / t.at("file").get<std::string>(),
                       t.at("key").get<std::vector<std::string>>()});
    }
    return out;
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    return q + "\"";
}

std::string to_csv(const ingest::CsvData& data) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out.push_back(',');
            out += csv_field(fields[i]);
        }
        out += "\n";
    };
    line(data.header);
    for (const auto& r : data.rows) line(r);
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void BenchReport::write_csv(std::ostream& out) const {
    out << "phase,ingest_seconds,sync_seconds,total_seconds,rows_changed,rows_selected,embed_calls\n";
    for (const BenchPhase* p : {&fresh, &update, &noop}) {
        out << p->name << ',' << p->ingest_seconds << ',' << p->sync_seconds << ',' << p->total_seconds() << ','
            << p->rows_changed << ',' << p->rows_selected << ',' << p->embed_calls << '\n';
    }
}

BenchReport bench_ingest(const fs::path& corpus_dir, const fs::path& work_dir, const embed::EmbeddingProvider& provider,
                         const BenchOptions& options) {
    const auto corpus = load_corpus_manifest(corpus_dir);
    fs::remove_all(work_dir);
    fs::create_directories(work_dir);

    ingest::SourceStore sources(work_dir / "sources.db");
    vecstore::VectorStore vectors(provider.dim(), provider.fingerprint());
    Renderer renderer(options.templates, options.sync.split);
    SyncPipeline pipeline(sources, vectors, provider, work_dir / "vectors", renderer, options.sync);

    std::vector<ingest::CsvData> original;
    for (const auto& t : corpus) original.push_back(ingest::parse_csv(read_file(t.file)));

    // Edited copy: every modify_every-th row gets its last non-key column changed.
    std::vector<ingest::CsvData> modified = original;
    BenchReport report;
    for (std::size_t ti = 0; ti < corpus.size(); ++ti) {
        auto& data = modified[ti];
        report.rows_total += data.rows.size();
        std::size_t col = data.header.size();
        for (std::size_t c = data.header.size(); c-- > 0;) {
            const auto& key = corpus[ti].natural_key;
            if (std::find(key.begin(), key.end(), data.header[c]) == key.end()) {
                col = c;
                break;
            }
        }
        if (col == data.header.size()) continue;
        std::vector<std::string> key_cols;
        for (const auto& k : corpus[ti].natural_key) key_cols.push_back(k);
        for (std::size_t r = 0; r < data.rows.size(); r += options.modify_every) {
            data.rows[r][col] += " (revised)";
            ++report.rows_modified;
            ingest::SourceRow row;
            row.table = corpus[ti].table;
            for (std::size_t c = 0; c < data.header.size(); ++c) row.fields[data.header[c]] = data.rows[r][c];
            report.docs_from_modified_rows += renderer.render(row, data.header).size();
        }
    }

    auto run_phase = [&](const std::string& name, const std::vector<ingest::CsvData>& inputs) {
        BenchPhase phase;
        phase.name = name;
        auto t0 = std::chrono::steady_clock::now();
        for (std::size_t ti = 0; ti < corpus.size(); ++ti) {
            auto stats = ingest::ingest_csv(sources, to_csv(inputs[ti]), corpus[ti].table, corpus[ti].natural_key);
            phase.rows_changed += stats.inserted + stats.updated;
        }
        phase.ingest_seconds = seconds_since(t0);
        auto t1 = std::chrono::steady_clock::now();
        auto stats = pipeline.run();
        phase.sync_seconds = seconds_since(t1);
        if (!stats.ok()) throw Error("bench sync failed: " + stats.errors.front());
        phase.embed_calls = stats.docs_embedded;
        phase.rows_selected = stats.rows_selected;
        return phase;
    };

    report.fresh = run_phase("fresh", original);
    report.update = run_phase("update", modified);
    report.noop = run_phase("noop", modified);
    return report;
}

}  // namespace campusrag::syncpipe
