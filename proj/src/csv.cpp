#include "campusrag/ingest.hpp"

namespace campusrag::ingest {

CsvError::CsvError(std::size_t record, const std::string& what)
    : InvalidInput("csv record " + std::to_string(record) + ": " + what), record_(record) {}

namespace {

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        int len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : (c & 0xF8) == 0xF0 ? 4 : 0;
        if (len == 0 || i + len > s.size()) return false;
        if (len == 2 && c < 0xC2) return false;
        for (int k = 1; k < len; ++k)
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
        i += len;
    }
    return true;
}

}  // namespace

CsvData parse_csv(std::string_view bytes) {
    if (bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    auto record_no = [&] { return records.size() + 1; };
    // Blank lines parse as a single empty field and are skipped.
    auto push_record = [&] {
        if (!record.empty() && !(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
        record.clear();
    };

    while (i < n) {
        // At the start of a field.
        if (bytes[i] == '"') {
            ++i;
            bool closed = false;
            while (i < n) {
                char c = bytes[i];
                if (c == '"') {
                    if (i + 1 < n && bytes[i + 1] == '"') {
                        field.push_back('"');
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                field.push_back(c);
                ++i;
            }
            if (!closed) throw CsvError(record_no(), "unterminated quoted field");
            if (i < n && bytes[i] != ',' && bytes[i] != '\n' && bytes[i] != '\r')
                throw CsvError(record_no(), "unexpected character after closing quote");
        } else {
            while (i < n && bytes[i] != ',' && bytes[i] != '\n' && bytes[i] != '\r') {
                if (bytes[i] == '"') throw CsvError(record_no(), "quote inside unquoted field");
                field.push_back(bytes[i]);
                ++i;
            }
        }
        if (!valid_utf8(field)) throw CsvError(record_no(), "invalid UTF-8");
        record.push_back(std::move(field));
        field.clear();

        if (i >= n) break;
        if (bytes[i] == ',') {
            ++i;
            if (i == n) record.emplace_back();  // trailing comma at EOF
            continue;
        }
        // End of record: \n, \r\n or lone \r.
        if (bytes[i] == '\r') ++i;
        if (i < n && bytes[i] == '\n') ++i;
        push_record();
    }
    push_record();
    if (records.empty()) throw CsvError(1, "missing header row");

    CsvData data;
    data.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != data.header.size())
            throw CsvError(r + 1, "expected " + std::to_string(data.header.size()) + " fields, found " +
                                      std::to_string(records[r].size()));
        data.rows.push_back(std::move(records[r]));
    }
    return data;
}

}  // namespace campusrag::ingest
