#include "campusrag/vecstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace campusrag::vecstore {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'R', 'V', 'S'};
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kRecordsFile = "records.bin";

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    void le(std::uint64_t v, int bytes) {
        char buf[8];
        for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(buf, bytes);
    }
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::uint64_t size) : in_(in), size_(size) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::uint64_t remaining() {
        const auto pos = static_cast<std::uint64_t>(in_.tellg());
        return pos > size_ ? 0 : size_ - pos;
    }
    std::string str() {
        std::uint32_t n = u32();
        if (n > remaining()) throw StoreError("vector store: truncated records file");
        std::string s(n, '\0');
        in_.read(s.data(), n);
        check();
        return s;
    }

private:
    std::uint64_t le(int bytes) {
        unsigned char buf[8] = {};
        in_.read(reinterpret_cast<char*>(buf), bytes);
        check();
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }
    void check() {
        if (!in_) throw StoreError("vector store: truncated records file");
    }
    std::ifstream& in_;
    std::uint64_t size_;
};

void replace_file(const fs::path& tmp, const fs::path& target) {
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw StoreError("vector store: cannot replace " + target.string() + ": " + ec.message());
}

}  // namespace

VectorStore::VectorStore(std::size_t dim, std::string fingerprint) : dim_(dim), fingerprint_(std::move(fingerprint)) {
    if (dim == 0) throw InvalidInput("vector store dim must be positive");
}

UpsertStats VectorStore::upsert(std::vector<VectorRecord> records) {
    std::unordered_set<std::string> batch_ids;
    for (const auto& r : records) {
        if (r.id.empty()) throw InvalidInput("vector record with empty id");
        if (r.vector.size() != dim_)
            throw InvalidInput("vector record '" + r.id + "' has dim " + std::to_string(r.vector.size()) +
                               ", store dim is " + std::to_string(dim_));
        for (double x : r.vector)
            if (!std::isfinite(x)) throw InvalidInput("vector record '" + r.id + "' has a non-finite component");
        batch_ids.insert(r.id);
    }

    std::unique_lock lock(mutex_);
    UpsertStats stats;
    for (auto& r : records) {
        auto it = index_.find(r.id);
        if (it != index_.end()) {
            records_[it->second] = std::move(r);
            ++stats.replaced;
        } else {
            index_.emplace(r.id, records_.size());
            records_.push_back(std::move(r));
            ++stats.inserted;
        }
    }
    // A repeated id inside one batch counts once per occurrence; the last one wins.
    return stats;
}

std::vector<Neighbor> VectorStore::query(std::span<const double> vector, std::size_t k) const {
    if (k == 0) throw InvalidInput("query k must be >= 1");
    if (vector.size() != dim_)
        throw InvalidInput("query dim " + std::to_string(vector.size()) + " does not match store dim " +
                           std::to_string(dim_));
    std::shared_lock lock(mutex_);
    std::vector<Neighbor> all;
    all.reserve(records_.size());
    for (const auto& r : records_) {
        double d = 1.0 - embed::cosine(vector, r.vector);
        all.push_back({r.id, std::clamp(d, 0.0, 2.0)});
    }
    lock.unlock();

    auto by_distance = [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    };
    std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), by_distance);
    all.resize(n);
    return all;
}

void VectorStore::erase_at(std::size_t pos) {
    index_.erase(records_[pos].id);
    if (pos + 1 != records_.size()) {
        records_[pos] = std::move(records_.back());
        index_[records_[pos].id] = pos;
    }
    records_.pop_back();
}

std::size_t VectorStore::remove_source(const std::string& table, const std::string& source_id,
                                       const std::vector<std::string>& keep) {
    std::unique_lock lock(mutex_);
    std::size_t removed = 0;
    for (std::size_t i = records_.size(); i-- > 0;) {
        const auto& r = records_[i];
        if (r.metadata.table != table || r.metadata.source_id != source_id) continue;
        if (std::find(keep.begin(), keep.end(), r.id) != keep.end()) continue;
        erase_at(i);
        ++removed;
    }
    return removed;
}

std::optional<VectorRecord> VectorStore::get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second];
}

std::vector<VectorRecord> VectorStore::snapshot() const {
    std::shared_lock lock(mutex_);
    auto copy = records_;
    lock.unlock();
    std::sort(copy.begin(), copy.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return copy;
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

StoreManifest VectorStore::manifest() const {
    return StoreManifest{dim_, fingerprint_, size(), StoreManifest::kFormatVersion};
}

void VectorStore::persist(const fs::path& dir) const {
    // Exclusive so a concurrent upsert cannot interleave with the write.
    std::unique_lock lock(mutex_);
    fs::create_directories(dir);
    const fs::path records_tmp = dir / (std::string(kRecordsFile) + ".tmp");
    {
        std::ofstream out(records_tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("vector store: cannot write " + records_tmp.string());
        out.write(kMagic, 4);
        Writer w(out);
        w.u32(StoreManifest::kFormatVersion);
        w.u64(dim_);
        w.u64(records_.size());
        for (const auto& r : records_) {
            w.str(r.id);
            w.str(r.document);
            w.str(r.metadata.table);
            w.str(r.metadata.source_id);
            w.u64(r.metadata.chunk_index);
            w.u64(static_cast<std::uint64_t>(r.metadata.rendered_at));
            for (double x : r.vector) w.f64(x);
        }
        out.flush();
        if (!out) throw StoreError("vector store: write failed for " + records_tmp.string());
    }
    json manifest = {{"format_version", StoreManifest::kFormatVersion},
                     {"dim", dim_},
                     {"fingerprint", fingerprint_},
                     {"count", records_.size()}};
    const fs::path manifest_tmp = dir / (std::string(kManifestFile) + ".tmp");
    {
        std::ofstream out(manifest_tmp, std::ios::trunc);
        out << manifest.dump(2) << "\n";
        if (!out) throw StoreError("vector store: write failed for " + manifest_tmp.string());
    }
    replace_file(records_tmp, dir / kRecordsFile);
    replace_file(manifest_tmp, dir / kManifestFile);
}

bool VectorStore::exists(const fs::path& dir) { return fs::exists(dir / kManifestFile); }

std::unique_ptr<VectorStore> VectorStore::load(const fs::path& dir, const std::optional<std::string>& expected) {
    std::ifstream mf(dir / kManifestFile);
    if (!mf) throw StoreError("vector store: no manifest in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw StoreError(std::string("vector store: unreadable manifest: ") + e.what());
    }
    const int version = manifest.value("format_version", 0);
    if (version != StoreManifest::kFormatVersion)
        throw StoreError("vector store: unsupported format version " + std::to_string(version));
    const auto dim = manifest.at("dim").get<std::size_t>();
    const auto fingerprint = manifest.at("fingerprint").get<std::string>();
    const auto count = manifest.at("count").get<std::size_t>();
    if (expected && *expected != fingerprint)
        throw StoreError("vector store at " + dir.string() + " was built with embedding provider '" + fingerprint +
                         "' but the configured provider is '" + *expected +
                         "'; re-run sync into a fresh store or restore the original provider settings");

    auto store = std::make_unique<VectorStore>(dim, fingerprint);
    std::ifstream in(dir / kRecordsFile, std::ios::binary);
    if (!in) throw StoreError("vector store: missing records file in " + dir.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kMagic)) throw StoreError("vector store: bad records file magic");
    Reader r(in, fs::file_size(dir / kRecordsFile));
    if (r.u32() != static_cast<std::uint32_t>(version)) throw StoreError("vector store: records/manifest version differ");
    if (r.u64() != dim) throw StoreError("vector store: records/manifest dim differ");
    const std::uint64_t n = r.u64();
    if (n != count) throw StoreError("vector store: records/manifest count differ");
    // Each record needs at least its four string lengths, two u64 and the vector.
    if (n > r.remaining() / (16 + 16 + 8 * dim)) throw StoreError("vector store: truncated records file");
    store->records_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        VectorRecord rec;
        rec.id = r.str();
        rec.document = r.str();
        rec.metadata.table = r.str();
        rec.metadata.source_id = r.str();
        rec.metadata.chunk_index = r.u64();
        rec.metadata.rendered_at = static_cast<Timestamp>(r.u64());
        rec.vector.resize(dim);
        for (auto& x : rec.vector) x = r.f64();
        if (!store->index_.emplace(rec.id, store->records_.size()).second)
            throw StoreError("vector store: duplicate id '" + rec.id + "' on disk");
        store->records_.push_back(std::move(rec));
    }
    return store;
}

}  // namespace campusrag::vecstore
