#include <doctest.h>

#include <future>
#include <random>
#include <set>
#include <sstream>

#include "campusrag/syncpipe.hpp"
#include "helpers.hpp"

using namespace campusrag;
using namespace campusrag::syncpipe;

namespace {

const std::string kFaculty =
    "Initial,Name,Designation,Status,Room,Email\n"
    "ABC,Amina Rahman,Lecturer,Full-time,4G-01,amina@university.edu\n"
    "DEF,Omar Islam,Professor,Part-time,5A-12,omar@university.edu\n"
    "GHI,Laila Haque,Senior Lecturer,Full-time,7C-03,\n";

struct Fixture {
    testing::TempDir dir;
    testing::ManualClock clock;
    std::unique_ptr<embed::EmbeddingProvider> base = embed::test_embedder(64);
    testing::ControlledEmbedder provider{*base};
    ingest::SourceStore sources{dir / "src.db", clock.clock()};
    vecstore::VectorStore vectors{provider.dim(), provider.fingerprint()};

    SyncPipeline pipeline(std::filesystem::path state = {}) {
        return SyncPipeline(sources, vectors, provider, std::move(state));
    }
};

std::set<std::string> ids(const vecstore::VectorStore& store) {
    std::set<std::string> out;
    for (const auto& r : store.snapshot()) out.insert(r.id);
    return out;
}

}  // namespace

TEST_CASE("prerequisite sample renders to the golden documents") {
    testing::TempDir dir;
    ingest::SourceStore sources(dir / "src.db");
    ingest::ingest_csv(sources, testing::read_file(testing::source_dir() / "tests/fixtures/prerequisites_sample.csv"),
                       "prerequisites", {"Course"});
    auto schema = sources.schema("prerequisites");
    std::ostringstream rendered;
    std::vector<ingest::SourceRow> rows = sources.rows_since("prerequisites", 0);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.fields.at("Course") < b.fields.at("Course"); });
    for (const auto& row : rows)
        for (const auto& d : render_row(row, schema->columns)) {
            CHECK(d.metadata.source_id == row.row_key);
            CHECK(d.metadata.table == "prerequisites");
            CHECK(d.id == "prerequisites:" + row.row_key + ":" + d.id.substr(d.id.find(':', 14) + 1));
            rendered << d.text << "\n";
        }
    CHECK(rendered.str() ==
          "Course CSE111 has prerequisite CSE110 (HP).\n"
          "Full prerequisite chain for CSE111: CSE111--CSE110.\n"
          "Course CSE220 has prerequisite CSE111 (HP), CSE230 (HP).\n"
          "Full prerequisite chain for CSE220: CSE230--CSE111--CSE110.\n"
          "Course CSE221 has prerequisite CSE220 (HP).\n"
          "Full prerequisite chain for CSE221: CSE220--CSE111--CSE110.\n"
          "Course CSE250 has prerequisite PHY112 (SP).\n"
          "Course CSE251 has prerequisite CSE250 (HP).\n"
          "Full prerequisite chain for CSE251: CSE250.\n"
          "Course CSE260 has prerequisite CSE251 (HP).\n"
          "Full prerequisite chain for CSE260: CSE251--CSE250.\n"
          "Course CSE310 has prerequisite CSE370 (HP).\n"
          "Full prerequisite chain for CSE310: CSE370--CSE221--CSE220--CSE111--CSE110.\n"
          "Course CSE321 has prerequisite CSE221 (HP).\n"
          "Full prerequisite chain for CSE321: CSE221--CSE220--CSE111--CSE110.\n"
          "Course CSE330 has prerequisite MAT216 (HP).\n"
          "Full prerequisite chain for CSE330: MAT120--MAT110.\n"
          "Course CSE331 has prerequisite CSE221 (HP).\n"
          "Full prerequisite chain for CSE331: CSE221--CSE220--CSE111--CSE110.\n");
}

TEST_CASE("faculty facets, missing values and fallback") {
    ingest::SourceRow row{"faculty", "k1", {{"Initial", "ABC"}, {"Name", "Amina Rahman"}, {"Designation", "Lecturer"},
                                            {"Status", "Full-time"}, {"Room", "4G-01"}, {"Email", "a@u.edu"}},
                          "h", 0};
    std::vector<std::string> cols = {"Initial", "Name", "Designation", "Status", "Room", "Email"};
    auto docs = render_row(row, cols);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].text == "Amina Rahman (ABC) is a Lecturer (Full-time) whose office is room 4G-01.");
    CHECK(docs[0].id == "faculty:k1:role:0");
    CHECK(docs[1].text == "The email address of Amina Rahman (ABC) is a@u.edu.");

    row.fields["Email"] = "  N/A ";
    CHECK(render_row(row, cols).size() == 1);

    ingest::SourceRow other{"clubs", "k2", {{"Club", "Chess"}, {"Room", ""}, {"Advisor", "DEF"}}, "h", 0};
    auto fb = render_row(other, std::vector<std::string>{"Club", "Room", "Advisor"});
    REQUIRE(fb.size() == 1);
    CHECK(fb[0].text == "Club: Chess; Advisor: DEF");
    CHECK(fb[0].id == "clubs:k2:record:0");

    CHECK(is_missing(""));
    CHECK(is_missing(" None "));
    CHECK(is_missing("NULL"));
    CHECK(is_missing("nan"));
    CHECK_FALSE(is_missing("0"));
    CHECK_FALSE(is_missing("Nonexistent"));
}

TEST_CASE("long texts are chunked with stable ids") {
    std::string answer;
    for (int i = 0; i < 60; ++i) answer += "Sentence number " + std::to_string(i) + " about the library. ";
    ingest::SourceRow row{"qa", "q1", {{"Question", "What?"}, {"Answer", answer}}, "h", 0};
    Renderer renderer(default_templates(), textprep::SplitOptions{300, 60});
    auto docs = renderer.render(row, std::vector<std::string>{"Question", "Answer"});
    REQUIRE(docs.size() > 1);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        CHECK(docs[i].id == "qa:q1:qa:" + std::to_string(i));
        CHECK(docs[i].metadata.chunk_index == i);
        CHECK(textprep::utf8::decode(docs[i].text).size() <= 300);
        CHECK_FALSE(docs[i].text.empty());
    }
    auto again = renderer.render(row, std::vector<std::string>{"Question", "Answer"});
    for (std::size_t i = 0; i < docs.size(); ++i) CHECK(again[i].id == docs[i].id);
}

TEST_CASE("cursor selection and persistence") {
    TableCursor c;
    c.timestamp = 100;
    c.hashes_at_timestamp = {{"a", "h1"}};
    auto row = [](std::string key, std::string hash, Timestamp t) {
        return ingest::SourceRow{"t", std::move(key), {}, std::move(hash), t};
    };
    CHECK(c.selects(row("x", "h", 101)));
    CHECK_FALSE(c.selects(row("x", "h", 99)));
    CHECK_FALSE(c.selects(row("a", "h1", 100)));
    CHECK(c.selects(row("a", "h2", 100)));
    CHECK(c.selects(row("b", "h1", 100)));

    IngestCursor cursor;
    std::vector<ingest::SourceRow> rows = {row("a", "1", 5), row("b", "2", 7), row("c", "3", 7)};
    cursor.advance("t", rows);
    REQUIRE(cursor.find("t"));
    CHECK(cursor.find("t")->timestamp == 7);
    CHECK(cursor.find("t")->hashes_at_timestamp.size() == 2);
    cursor.advance("t", std::vector<ingest::SourceRow>{row("a", "9", 3)});
    CHECK(cursor.find("t")->timestamp == 7);  // never moves backwards

    testing::TempDir dir;
    cursor.save(dir / "cursor.json");
    CHECK(IngestCursor::load(dir / "cursor.json") == cursor);
    CHECK(IngestCursor::load(dir / "absent.json").tables().empty());
}

TEST_CASE("fresh, no-op and one-row edit") {
    Fixture f;
    ingest::ingest_csv(f.sources, kFaculty, "faculty", {"Initial"});
    auto pipe = f.pipeline(f.dir / "state");

    auto fresh = pipe.run();
    CHECK(fresh.ok());
    CHECK(fresh.rows_selected == 3);
    CHECK(fresh.docs_embedded == 5);  // GHI has no email
    CHECK(f.provider.calls == 5);
    CHECK(f.vectors.size() == 5);

    auto noop = pipe.run();
    CHECK(noop.rows_selected == 0);
    CHECK(noop.docs_embedded == 0);
    CHECK(f.provider.calls == 5);

    // Same second: the edited row must still be picked up.
    std::string edited = kFaculty;
    edited.replace(edited.find("5A-12"), 5, "6B-20");
    ingest::ingest_csv(f.sources, edited, "faculty", {"Initial"});
    auto edit = pipe.run();
    CHECK(edit.rows_selected == 1);
    CHECK(edit.docs_embedded == 2);
    CHECK(f.vectors.size() == 5);
    const auto key = ingest::row_key_of(std::vector<std::string>{"DEF"});
    auto role = f.vectors.get("faculty:" + key + ":role:0");
    REQUIRE(role);
    CHECK(role->document.find("6B-20") != std::string::npos);
    CHECK(role->vector == embed::embed_one(*f.base, role->document));

    // A facet that disappears is removed from the vector store.
    f.clock.advance(5);
    std::string no_email = edited;
    no_email.replace(no_email.find("omar@university.edu"), 19, "");
    ingest::ingest_csv(f.sources, no_email, "faculty", {"Initial"});
    auto drop = pipe.run();
    CHECK(drop.docs_embedded == 1);
    CHECK(drop.removed == 1);
    CHECK_FALSE(f.vectors.get("faculty:" + key + ":email:0"));

    // State survives a restart.
    auto loaded = vecstore::VectorStore::load(f.dir / "state", f.provider.fingerprint());
    CHECK(ids(*loaded) == ids(f.vectors));
    SyncPipeline restarted(f.sources, *loaded, f.provider, f.dir / "state");
    CHECK(restarted.run().docs_embedded == 0);
}

TEST_CASE("embedding failure keeps the cursor and a retry converges") {
    Fixture f;
    ingest::ingest_csv(f.sources, kFaculty, "faculty", {"Initial"});
    ingest::ingest_csv(f.sources, "Course,Pre-Requisite,Full Chain\nCSE111,CSE110 (HP),CSE111--CSE110\n",
                       "prerequisites", {"Course"});
    auto pipe = f.pipeline(f.dir / "state");
    f.provider.fail = true;
    auto failed = pipe.run();
    CHECK_FALSE(failed.ok());
    CHECK(failed.failed_tables.size() == 2);
    CHECK(pipe.cursor().tables().empty());
    CHECK(f.vectors.size() == 0);

    f.provider.fail = false;
    auto retry = pipe.run();
    CHECK(retry.ok());
    CHECK(retry.rows_selected == 4);
    CHECK(f.vectors.size() == 7);
    CHECK(pipe.run().docs_embedded == 0);
}

TEST_CASE("a second concurrent sync is refused") {
    Fixture f;
    ingest::ingest_csv(f.sources, kFaculty, "faculty", {"Initial"});
    auto pipe = f.pipeline();
    std::promise<void> entered, release;
    auto release_future = release.get_future().share();
    std::atomic<bool> first{true};
    f.provider.gate = [&] {
        if (first.exchange(false)) {
            entered.set_value();
            release_future.wait();
        }
    };
    auto job = std::async(std::launch::async, [&] { return pipe.run(); });
    entered.get_future().wait();
    CHECK(pipe.busy());
    CHECK_THROWS_AS(pipe.run(), SyncBusy);
    release.set_value();
    CHECK(job.get().ok());
    CHECK_FALSE(pipe.busy());
}

TEST_CASE("random ingest/sync interleavings converge with no orphans") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        Fixture f;
        auto pipe = f.pipeline();
        std::map<std::string, std::string> rooms;
        for (int step = 0; step < 15; ++step) {
            const int op = static_cast<int>(rng() % 3);
            if (op < 2) {
                for (int k = 0; k < 3; ++k) rooms["R" + std::to_string(rng() % 8)] = std::to_string(rng() % 4);
                std::string csv = "Code,Room,Note\n";
                for (const auto& [code, room] : rooms) csv += code + "," + room + "," + (room == "0" ? "" : "x") + "\n";
                ingest::ingest_csv(f.sources, csv, "rooms", {"Code"});
                if (rng() % 2) f.clock.advance(1);
            } else {
                pipe.run();
            }
        }
        pipe.run();
        auto state = f.vectors.snapshot();
        CHECK(pipe.run().docs_embedded == 0);
        CHECK(f.vectors.snapshot() == state);

        std::set<std::string> seen_ids, sources_with_docs;
        for (const auto& r : state) {
            CHECK(seen_ids.insert(r.id).second);
            CHECK(f.sources.row_exists(r.metadata.table, r.metadata.source_id));
            sources_with_docs.insert(r.metadata.source_id);
            auto row = f.sources.row(r.metadata.table, r.metadata.source_id);
            CHECK(r.document.find("Room: " + row->fields.at("Room")) != std::string::npos);
        }
        for (const auto& row : f.sources.rows_since("rooms", 0)) CHECK(sources_with_docs.count(row.row_key) == 1);
    }
}

TEST_CASE("web snapshots sync as the web table") {
    Fixture f;
    f.sources.record_snapshot("https://example.edu/a", "Advising week starts Sunday.");
    auto pipe = f.pipeline();
    auto s = pipe.run();
    CHECK(s.docs_embedded == 1);
    const auto key = ingest::content_hash("https://example.edu/a");
    auto rec = f.vectors.get("web:" + key + ":page:0");
    REQUIRE(rec);
    CHECK(rec->document == "Advising week starts Sunday.");
    f.clock.advance(1);
    f.sources.record_snapshot("https://example.edu/a", "Advising week starts Monday.");
    CHECK(pipe.run().docs_embedded == 1);
    CHECK(f.vectors.size() == 1);
    CHECK(f.vectors.get("web:" + key + ":page:0")->document == "Advising week starts Monday.");
}

TEST_CASE("bench on the sample corpus") {
    auto provider = embed::test_embedder();
    testing::TempDir work;
    auto report = bench_ingest(testing::source_dir() / "data/sample", work.path(), *provider);
    CHECK(report.rows_total == 500);
    CHECK(report.rows_modified == 50);
    CHECK(report.fresh.embed_calls == 900);
    CHECK(report.docs_from_modified_rows == 90);
    CHECK(report.update.embed_calls == report.docs_from_modified_rows);
    CHECK(report.update.rows_changed == 50);
    CHECK(report.noop.embed_calls == 0);
    CHECK(report.noop.rows_changed == 0);
    CHECK(report.t_noop() < 0.1 * report.t_fresh());
    std::ostringstream csv;
    report.write_csv(csv);
    const std::string text = csv.str();
    CHECK(text.rfind("phase,ingest_seconds,sync_seconds,total_seconds,rows_changed,rows_selected,embed_calls\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
