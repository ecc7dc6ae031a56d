#pragma once

// Twenty short campus notices, a synonym table for the hashing embedder, and
// queries with known answers.

#include <string>
#include <utility>
#include <vector>

#include "campusrag/embed.hpp"
#include "campusrag/vecstore.hpp"

namespace testing {

inline campusrag::embed::SynonymTable fixture_synonyms() {
    return {
        {"grading", "marks", "assessment"},
        {"tuition", "fees", "payment"},
        {"hostel", "dormitory", "housing"},
        {"routine", "timetable", "schedule"},
        {"lecturer", "instructor", "teacher"},
        {"cafeteria", "canteen", "dining"},
    };
}

inline std::vector<std::pair<std::string, std::string>> fixture_docs() {
    return {
        {"doc00", "Grading policy: the final exam counts for forty percent of the course total."},
        {"doc01", "Tuition is paid in three instalments through the accounts office."},
        {"doc02", "Hostel seats for first year students are allotted in May."},
        {"doc03", "The class routine for the spring semester is posted on the portal."},
        {"doc04", "Each lecturer keeps two consultation hours every week."},
        {"doc05", "The cafeteria on level two serves lunch from noon."},
        {"doc06", "Zoology field trips leave from the north gate."},
        {"doc07", "The robotics club meets on Thursday evenings in lab 7."},
        {"doc08", "Convocation gowns can be collected from the registrar."},
        {"doc09", "Parking permits are issued by the security office."},
        {"doc10", "The swimming pool is closed for maintenance in July."},
        {"doc11", "Plagiarism cases are reviewed by the disciplinary committee."},
        {"doc12", "Transcripts are printed within five working days."},
        {"doc13", "The shuttle bus runs between both campuses every hour."},
        {"doc14", "Scholarship renewals require a minimum GPA of 3.5."},
        {"doc15", "The chess tournament registration closes on Friday."},
        {"doc16", "Laboratory safety training is mandatory before the first experiment."},
        {"doc17", "Internship reports must be submitted to the career office."},
        {"doc18", "The gymnasium opens at six in the morning."},
        {"doc19", "Thesis supervisors are assigned in the seventh semester."},
    };
}

// Query -> the one document containing that literal token.
inline std::vector<std::pair<std::string, std::string>> literal_queries() {
    return {{"zoology", "doc06"},    {"robotics", "doc07"},    {"convocation", "doc08"}, {"parking", "doc09"},
            {"plagiarism", "doc11"}, {"shuttle", "doc13"},     {"chess", "doc15"},       {"gymnasium", "doc18"},
            {"thesis", "doc19"},     {"internship", "doc17"}};
}

// Query made only of synonyms of a word in the target; no query token
// occurs in any document.
inline std::vector<std::pair<std::string, std::string>> synonym_queries() {
    return {{"marks", "doc00"},      {"fees", "doc01"},       {"dormitory", "doc02"},
            {"timetable", "doc03"},  {"instructor", "doc04"}, {"canteen", "doc05"}};
}

inline void load_fixture(campusrag::vecstore::VectorStore& store, const campusrag::embed::EmbeddingProvider& provider) {
    std::vector<campusrag::vecstore::VectorRecord> records;
    std::vector<std::string> texts;
    for (const auto& [id, text] : fixture_docs()) texts.push_back(text);
    auto vectors = campusrag::embed::embed_texts(provider, texts);
    std::size_t i = 0;
    for (const auto& [id, text] : fixture_docs()) {
        records.push_back({id, vectors[i++], text, {"notices", id, 0, 0}});
    }
    store.upsert(std::move(records));
}

}  // namespace testing
