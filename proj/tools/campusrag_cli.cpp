// Command-line front end: serve, ingest, sync, search, chat, eval, bench-ingest.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "campusrag/evalkit.hpp"
#include "campusrag/service.hpp"
#include "campusrag/syncpipe.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace campusrag;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

service::AppConfig resolve_config(const std::string& path) {
    if (!path.empty()) return service::load_config(path);
    if (fs::exists("campusrag.json")) return service::load_config("campusrag.json");
    service::AppConfig c;
    c.finalize();
    c.validate();
    return c;
}

std::vector<std::string> split_keys(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');)
        if (!part.empty()) out.push_back(part);
    return out;
}

service::HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Hybrid retrieval and question answering over a campus knowledge base"};
    cli.require_subcommand(1);
    std::string config_path;
    bool verbose = false;
    cli.add_option("-c,--config", config_path, "JSON config file (default: ./campusrag.json if present)");
    cli.add_flag("-v,--verbose", verbose, "Log at info level");

    auto* serve = cli.add_subcommand("serve", "Run the HTTP API");
    std::string host;
    int port = -1;
    serve->add_option("--host", host, "Bind address (overrides config)");
    serve->add_option("--port", port, "Port (overrides config)");

    auto* ingest_cmd = cli.add_subcommand("ingest", "Load data into the relational store");
    ingest_cmd->require_subcommand(1);
    auto* ingest_csv = ingest_cmd->add_subcommand("csv", "Ingest one CSV file as a table");
    std::string csv_file, table, key;
    ingest_csv->add_option("file", csv_file, "CSV file")->required()->check(CLI::ExistingFile);
    ingest_csv->add_option("--table", table, "Table name")->required();
    ingest_csv->add_option("--key", key, "Natural-key columns, comma separated")->required();
    auto* ingest_web = ingest_cmd->add_subcommand("web", "Fetch a list of URLs and record snapshots");
    std::string url_file;
    ingest_web->add_option("urls", url_file, "Text file with one URL per line")->required()->check(CLI::ExistingFile);

    auto* sync_cmd = cli.add_subcommand("sync", "Embed new and changed rows into the vector store");

    auto* search = cli.add_subcommand("search", "Hybrid search without calling the LLM");
    std::string query;
    std::size_t k = 5;
    std::optional<double> lambda;
    bool explain = false;
    search->add_option("query", query, "Query text")->required();
    search->add_option("-k", k, "Number of results")->check(CLI::PositiveNumber);
    search->add_option("--lambda", lambda, "Weight of the BM25 side")->check(CLI::Range(0.0, 1.0));
    search->add_flag("--explain", explain, "Print every score component");

    auto* chat_cmd = cli.add_subcommand("chat", "Interactive question answering on stdin/stdout");
    std::string session_id;
    chat_cmd->add_option("--session", session_id, "Continue an existing session");

    auto* eval = cli.add_subcommand("eval", "BLEU, ROUGE-L, METEOR and embedding score for predictions");
    std::string pred_file, ref_file, out_csv, out_json;
    eval->add_option("--pred", pred_file, "Predictions JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--ref", ref_file, "References JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out_csv, "CSV report path");
    eval->add_option("--json", out_json, "JSON report path");

    auto* bench = cli.add_subcommand("bench-ingest", "Fresh / 10%-update / no-op ingestion timing");
    std::string corpus_dir = "data/sample", work_dir, bench_out;
    bench->add_option("--corpus", corpus_dir, "Directory with corpus.json and its CSV files");
    bench->add_option("--work", work_dir, "Scratch directory (default: a temporary directory)");
    bench->add_option("--out", bench_out, "CSV report path");

    CLI11_PARSE(cli, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        auto config = resolve_config(config_path);

        if (*eval) {
            auto pairs = evalkit::pair_jsonl(read_file(pred_file), read_file(ref_file));
            auto provider = service::make_provider(config.embedding);
            auto report = evalkit::evaluate_corpus(pairs, *provider);
            if (!out_csv.empty()) {
                std::ofstream out(out_csv);
                report.write_csv(out);
            }
            if (!out_json.empty()) std::ofstream(out_json) << report.to_json().dump(2) << "\n";
            std::cout << std::fixed << std::setprecision(4) << "pairs    " << report.pairs.size() << "\n"
                      << "bleu     " << report.mean_bleu << "\n"
                      << "rouge_l  " << report.mean_rouge_l << "\n"
                      << "meteor   " << report.mean_meteor << "\n"
                      << "embed_p  " << report.mean_embed_precision << "\n"
                      << "embed_r  " << report.mean_embed_recall << "\n"
                      << "embed_f1 " << report.mean_embed_f1 << "\n";
            return 0;
        }

        if (*bench) {
            auto provider = service::make_provider(config.embedding);
            fs::path work = work_dir.empty() ? fs::temp_directory_path() / "campusrag-bench" : fs::path(work_dir);
            syncpipe::BenchOptions options;
            options.sync.split = config.chunk;
            auto report = syncpipe::bench_ingest(corpus_dir, work, *provider, options);
            if (!bench_out.empty()) {
                std::ofstream out(bench_out);
                report.write_csv(out);
            }
            report.write_csv(std::cout);
            std::cout << "rows " << report.rows_total << ", modified " << report.rows_modified << ", docs from modified rows "
                      << report.docs_from_modified_rows << "\n";
            if (work_dir.empty()) fs::remove_all(work);
            return 0;
        }

        service::App app(config);

        if (*serve) {
            service::HttpServer server(app);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const std::string h = host.empty() ? config.host : host;
            const int p = port < 0 ? config.port : port;
            std::cerr << "listening on " << h << ":" << p << "\n";
            server.run(h, p);
            g_server = nullptr;
            return 0;
        }

        if (*ingest_csv) {
            auto stats = app.ingest_csv(read_file(csv_file), table, split_keys(key));
            std::cout << json{{"table", table},
                              {"inserted", stats.inserted},
                              {"updated", stats.updated},
                              {"unchanged", stats.unchanged}}
                             .dump()
                      << "\n";
            return 0;
        }

        if (*ingest_web) {
            int failures = 0;
            for (const auto& r : app.ingest_web(read_file(url_file))) {
                std::cout << r.line << "\t" << ingest::to_string(r.status) << "\t" << r.url;
                if (r.version > 0) std::cout << "\tv" << r.version;
                if (!r.error.empty()) std::cout << "\t" << r.error;
                std::cout << "\n";
                if (r.status == ingest::UrlReport::Status::Failed || r.status == ingest::UrlReport::Status::Invalid)
                    ++failures;
            }
            return failures ? 2 : 0;
        }

        if (*sync_cmd) {
            auto s = app.sync();
            std::cout << json{{"rows_scanned", s.rows_scanned},
                              {"rows_selected", s.rows_selected},
                              {"docs_embedded", s.docs_embedded},
                              {"upserted", s.upserted},
                              {"removed", s.removed},
                              {"elapsed_seconds", s.elapsed_seconds},
                              {"failed_tables", s.failed_tables},
                              {"errors", s.errors}}
                             .dump()
                      << "\n";
            return s.ok() ? 0 : 2;
        }

        if (*search) {
            auto hits = app.search(query, k, lambda);
            if (hits.empty()) std::cout << "no matches\n";
            int rank = 1;
            for (const auto& h : hits) {
                std::cout << std::fixed << std::setprecision(4) << rank++ << ". " << h.id << "  combined=" << h.combined
                          << "\n   " << h.document << "\n";
                if (explain) {
                    std::cout << "   bm25_raw=" << h.bm25_raw << " bm25_norm=" << h.bm25_norm << " distance="
                              << (h.distance ? std::to_string(*h.distance) : std::string("absent"))
                              << " similarity=" << h.similarity << "\n";
                }
            }
            return 0;
        }

        if (*chat_cmd) {
            std::optional<std::string> session;
            if (!session_id.empty()) session = session_id;
            std::string line;
            std::cerr << "> ";
            while (std::getline(std::cin, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) {
                    std::cerr << "> ";
                    continue;
                }
                auto outcome = app.chat(session, line);
                session = outcome.session_id;
                std::cout << outcome.reply.reply << "\nSources: [";
                for (std::size_t i = 0; i < outcome.reply.sources.size(); ++i)
                    std::cout << (i ? ", " : "") << outcome.reply.sources[i].id;
                std::cout << "]\n" << std::flush;
                std::cerr << "(session " << *session << ")\n> ";
            }
            return 0;
        }
    } catch (const syncpipe::SyncBusy& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
