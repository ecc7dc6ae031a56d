#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "campusrag/common.hpp"
#include "campusrag/embed.hpp"

namespace campusrag::vecstore {

struct RecordMetadata {
    std::string table;
    std::string source_id;
    std::size_t chunk_index = 0;
    Timestamp rendered_at = 0;

    bool operator==(const RecordMetadata&) const = default;
};

struct VectorRecord {
    std::string id;
    embed::Vector vector;
    std::string document;
    RecordMetadata metadata;

    bool operator==(const VectorRecord&) const = default;
};

struct StoreManifest {
    static constexpr int kFormatVersion = 1;

    std::size_t dim = 0;
    std::string fingerprint;
    std::size_t count = 0;
    int format_version = kFormatVersion;
};

struct UpsertStats {
    std::size_t inserted = 0;
    std::size_t replaced = 0;
};

struct Neighbor {
    std::string id;
    double distance = 0.0;  // 1 - cosine, in [0, 2]
};

/// Exact nearest-neighbour store keyed by record id.
///
/// Many concurrent readers or one writer. Files on disk: `manifest.json` and
/// `records.bin` inside the store directory (see docs/vecstore-format.md).
class VectorStore {
public:
    VectorStore(std::size_t dim, std::string fingerprint);

    // Whole batch is validated before anything is written.
    UpsertStats upsert(std::vector<VectorRecord> records);

    // Ascending distance, ties by id; min(k, size()) results.
    std::vector<Neighbor> query(std::span<const double> vector, std::size_t k) const;

    // Removes every record of (table, source_id) whose id is not in `keep`.
    std::size_t remove_source(const std::string& table, const std::string& source_id,
                              const std::vector<std::string>& keep = {});

    std::optional<VectorRecord> get(const std::string& id) const;
    std::vector<VectorRecord> snapshot() const;
    std::size_t size() const;
    StoreManifest manifest() const;
    std::size_t dim() const noexcept { return dim_; }
    const std::string& fingerprint() const noexcept { return fingerprint_; }

    void persist(const std::filesystem::path& dir) const;

    // Refuses to load when `expected_fingerprint` is given and differs from the
    // stored one, or when the files are inconsistent.
    static std::unique_ptr<VectorStore> load(const std::filesystem::path& dir,
                                             const std::optional<std::string>& expected_fingerprint = {});

    static bool exists(const std::filesystem::path& dir);

private:
    void erase_at(std::size_t pos);

    std::size_t dim_;
    std::string fingerprint_;
    mutable std::shared_mutex mutex_;
    std::vector<VectorRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace campusrag::vecstore
