// Python bindings: text preparation, embedding, retrieval, metrics and the
// assembled application.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "campusrag/evalkit.hpp"
#include "campusrag/ingest.hpp"
#include "campusrag/retriever.hpp"
#include "campusrag/service.hpp"
#include "campusrag/syncpipe.hpp"
#include "campusrag/textprep.hpp"

namespace py = pybind11;
using namespace campusrag;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::handle& obj) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict sync_dict(const syncpipe::SyncStats& s) {
    py::dict d;
    d["rows_scanned"] = s.rows_scanned;
    d["rows_selected"] = s.rows_selected;
    d["docs_embedded"] = s.docs_embedded;
    d["upserted"] = s.upserted;
    d["removed"] = s.removed;
    d["elapsed_seconds"] = s.elapsed_seconds;
    d["failed_tables"] = s.failed_tables;
    d["errors"] = s.errors;
    return d;
}

// Owns the embedder behind a HybridRetriever over an in-memory store.
class Index {
public:
    Index(std::size_t dim, embed::SynonymTable synonyms, double lambda)
        : provider_(dim, std::move(synonyms)), store_(provider_.dim(), provider_.fingerprint()) {
        options_.lambda = lambda;
        retriever_ = std::make_unique<retriever::HybridRetriever>(store_, provider_, options_);
    }

    void add(const std::vector<std::pair<std::string, std::string>>& docs, const std::string& table) {
        std::vector<std::string> texts;
        for (const auto& d : docs) texts.push_back(d.second);
        auto vectors = embed::embed_texts(provider_, texts);
        std::vector<vecstore::VectorRecord> records;
        for (std::size_t i = 0; i < docs.size(); ++i)
            records.push_back({docs[i].first, std::move(vectors[i]), docs[i].second, {table, docs[i].first, 0, 0}});
        store_.upsert(std::move(records));
        retriever_->rebuild();
    }

    std::vector<retriever::ScoredDoc> search(const std::string& query, std::size_t k, std::optional<double> lambda) const {
        return retriever_->retrieve(query, k, lambda.value_or(options_.lambda));
    }

    std::size_t size() const { return retriever_->size(); }

private:
    embed::HashingEmbedder provider_;
    vecstore::VectorStore store_;
    retriever::RetrieverOptions options_;
    std::unique_ptr<retriever::HybridRetriever> retriever_;
};

}  // namespace

PYBIND11_MODULE(_campusrag, m) {
    m.doc() = "Hybrid BM25/vector retrieval and grounded chat over a campus knowledge base.";
    m.attr("__version__") = service::kVersion;

    // Registered later means tried first, so the subclass goes second.
    py::register_exception<Error>(m, "CampusragError", PyExc_RuntimeError);
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);

    // ---- text ----
    m.def("normalize", [](const std::string& s) { return textprep::normalize(s); });
    m.def("tokenize", [](const std::string& s) { return textprep::tokenize(s); });
    m.def("lemmatize", [](const std::string& s) { return textprep::lemmatize(s); });
    m.def("analyze", [](const std::string& s) { return textprep::analyze(s); },
          "Normalize, tokenize and lemmatize; the terms BM25 indexes.");
    m.def(
        "split_recursive",
        [](const std::string& text, std::size_t chunk_size, std::size_t overlap) {
            py::list out;
            for (const auto& c : textprep::split_recursive(text, chunk_size, overlap)) {
                py::dict d;
                d["text"] = c.text;
                d["start_offset"] = c.start_offset;
                d["chunk_index"] = c.chunk_index;
                out.append(d);
            }
            return out;
        },
        py::arg("text"), py::arg("chunk_size") = 1000, py::arg("overlap") = 200);
    m.def("content_hash", [](const std::string& s) { return ingest::content_hash(s); }, "Hex SHA-256.");

    // ---- embedding ----
    py::class_<embed::HashingEmbedder>(m, "HashingEmbedder")
        .def(py::init<std::size_t, embed::SynonymTable, std::uint64_t>(), py::arg("dim") = 256,
             py::arg("synonyms") = embed::SynonymTable{}, py::arg("seed") = embed::HashingEmbedder::kDefaultSeed)
        .def_property_readonly("dim", &embed::HashingEmbedder::dim)
        .def_property_readonly("fingerprint", &embed::HashingEmbedder::fingerprint)
        .def("embed", [](const embed::HashingEmbedder& e, const std::string& text) { return e.embed_text(text); })
        .def("embed_batch", [](const embed::HashingEmbedder& e, const std::vector<std::string>& texts) {
            return embed::embed_texts(e, texts);
        });
    m.def("cosine", [](const embed::Vector& u, const embed::Vector& v) { return embed::cosine(u, v); });

    // ---- retrieval ----
    py::class_<retriever::ScoredDoc>(m, "ScoredDoc")
        .def_readonly("id", &retriever::ScoredDoc::id)
        .def_readonly("document", &retriever::ScoredDoc::document)
        .def_readonly("table", &retriever::ScoredDoc::table)
        .def_readonly("source_id", &retriever::ScoredDoc::source_id)
        .def_readonly("bm25_raw", &retriever::ScoredDoc::bm25_raw)
        .def_readonly("bm25_norm", &retriever::ScoredDoc::bm25_norm)
        .def_readonly("distance", &retriever::ScoredDoc::distance)
        .def_readonly("similarity", &retriever::ScoredDoc::similarity)
        .def_readonly("combined", &retriever::ScoredDoc::combined)
        .def("__repr__", [](const retriever::ScoredDoc& d) {
            return "<ScoredDoc " + d.id + " combined=" + std::to_string(d.combined) + ">";
        });

    m.def(
        "bm25_topk",
        [](const std::vector<std::pair<std::string, std::string>>& docs, const std::string& query, std::size_t k,
           double k1, double b) {
            std::vector<retriever::IndexedDoc> indexed;
            for (const auto& [id, text] : docs) indexed.push_back({id, text});
            std::vector<std::pair<std::string, double>> out;
            for (const auto& h : retriever::Bm25Index::build(indexed, {k1, b}).topk(query, k))
                out.emplace_back(h.id, h.score);
            return out;
        },
        py::arg("docs"), py::arg("query"), py::arg("k") = 10, py::arg("k1") = 1.5, py::arg("b") = 0.75,
        "Okapi BM25 over (id, text) pairs; returns (id, score) best first.");

    m.def(
        "fuse",
        [](const std::vector<std::tuple<std::string, double, std::optional<double>>>& candidates, double lambda) {
            retriever::CandidateMap map;
            for (const auto& [id, raw, distance] : candidates) map[id] = {id, raw, distance};
            return retriever::fuse(map, lambda);
        },
        py::arg("candidates"), py::arg("lambda_") = 0.5,
        "Fuses (id, bm25_raw, distance or None) candidates; returns ScoredDoc best first.");

    py::class_<Index>(m, "Index", "In-memory hybrid index over the hashing embedder.")
        .def(py::init<std::size_t, embed::SynonymTable, double>(), py::arg("dim") = 256,
             py::arg("synonyms") = embed::SynonymTable{}, py::arg("lambda_") = 0.5)
        .def("add", &Index::add, py::arg("docs"), py::arg("table") = "docs")
        .def("search", &Index::search, py::arg("query"), py::arg("k") = 5, py::arg("lambda_") = py::none(),
             py::call_guard<py::gil_scoped_release>())
        .def("__len__", &Index::size);

    // ---- metrics ----
    m.def(
        "bleu",
        [](const std::string& candidate, const std::vector<std::string>& references, int max_n, bool smoothing) {
            auto c = evalkit::bleu(candidate, references, evalkit::BleuOptions{max_n, {}, smoothing});
            py::dict d;
            d["bleu"] = c.bleu;
            d["precisions"] = c.precisions;
            d["brevity_penalty"] = c.brevity_penalty;
            d["candidate_length"] = c.candidate_length;
            d["reference_length"] = c.reference_length;
            return d;
        },
        py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4, py::arg("smoothing") = false);
    m.def(
        "rouge_l",
        [](const std::string& candidate, const std::string& reference, double beta) {
            auto r = evalkit::rouge_l(candidate, reference, beta);
            py::dict d;
            d["lcs"] = r.lcs;
            d["precision"] = r.precision;
            d["recall"] = r.recall;
            d["f"] = r.f;
            return d;
        },
        py::arg("candidate"), py::arg("reference"), py::arg("beta") = 1.0);
    m.def(
        "meteor",
        [](const std::string& candidate, const std::string& reference) {
            auto r = evalkit::meteor(candidate, reference);
            py::dict d;
            d["meteor"] = r.meteor;
            d["matches"] = r.matches;
            d["chunks"] = r.chunks;
            d["precision"] = r.precision;
            d["recall"] = r.recall;
            d["penalty"] = r.penalty;
            d["alignment"] = r.alignment;
            return d;
        },
        py::arg("candidate"), py::arg("reference"));
    m.def(
        "embed_score",
        [](const std::string& candidate, const std::string& reference, const embed::HashingEmbedder& provider) {
            auto s = evalkit::embed_score(candidate, reference, provider);
            py::dict d;
            d["precision"] = s.precision;
            d["recall"] = s.recall;
            d["f1"] = s.f1;
            return d;
        },
        py::arg("candidate"), py::arg("reference"), py::arg("provider"));

    // ---- application ----
    py::class_<service::App>(m, "App", "Stores, sync pipeline, retriever and chat built from a config dict.")
        .def(py::init([](const py::dict& config) {
                 return std::make_unique<service::App>(service::config_from_json(from_python(config)));
             }),
             py::arg("config") = py::dict())
        .def(
            "ingest_csv",
            [](service::App& app, const std::string& csv, const std::string& table, const std::vector<std::string>& key) {
                ingest::IngestStats s;
                {
                    py::gil_scoped_release release;
                    s = app.ingest_csv(csv, table, key);
                }
                py::dict d;
                d["inserted"] = s.inserted;
                d["updated"] = s.updated;
                d["unchanged"] = s.unchanged;
                return d;
            },
            py::arg("csv"), py::arg("table"), py::arg("key"))
        .def("sync",
             [](service::App& app) {
                 syncpipe::SyncStats s;
                 {
                     py::gil_scoped_release release;
                     s = app.sync();
                 }
                 return sync_dict(s);
             })
        .def("search", &service::App::search, py::arg("query"), py::arg("k") = 5, py::arg("lambda_") = py::none(),
             py::call_guard<py::gil_scoped_release>())
        .def(
            "chat",
            [](service::App& app, const std::string& message, std::optional<std::string> session_id) {
                service::ChatOutcome out;
                {
                    py::gil_scoped_release release;
                    out = app.chat(session_id, message);
                }
                py::dict d;
                d["session_id"] = out.session_id;
                d["reply"] = out.reply.reply;
                d["ok"] = out.reply.ok;
                d["error_code"] = out.reply.error_code;
                py::list sources;
                for (const auto& s : out.reply.sources) {
                    py::dict r;
                    r["id"] = s.id;
                    r["table"] = s.table;
                    r["source_id"] = s.source_id;
                    r["combined"] = s.combined;
                    sources.append(r);
                }
                d["sources"] = sources;
                return d;
            },
            py::arg("message"), py::arg("session_id") = py::none())
        .def("health", [](const service::App& app) { return to_python(app.health()); })
        .def_property_readonly("config", [](const service::App& app) { return to_python(app.config().to_json()); });
}
