#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <string>
#include <string_view>

#include "campusrag/ingest.hpp"
#include "campusrag/textprep.hpp"

namespace campusrag::ingest {

namespace {

namespace utf8 = textprep::utf8;

struct NamedEntity {
    std::string_view name;
    char32_t cp;
};

constexpr std::array<NamedEntity, 44> kEntities{{
    {"amp", U'&'},     {"lt", U'<'},      {"gt", U'>'},      {"quot", U'"'},    {"apos", U'\''},
    {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},     {"trade", 0x2122}, {"ndash", 0x2013},
    {"mdash", 0x2014}, {"hellip", 0x2026}, {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
    {"rdquo", 0x201D}, {"sbquo", 0x201A}, {"bdquo", 0x201E}, {"laquo", 0xAB},   {"raquo", 0xBB},
    {"middot", 0xB7},  {"bull", 0x2022},  {"euro", 0x20AC},  {"pound", 0xA3},   {"yen", 0xA5},
    {"cent", 0xA2},    {"sect", 0xA7},    {"para", 0xB6},    {"deg", 0xB0},     {"plusmn", 0xB1},
    {"times", 0xD7},   {"divide", 0xF7},  {"iexcl", 0xA1},   {"iquest", 0xBF},  {"shy", 0xAD},
    {"ensp", 0x2002},  {"emsp", 0x2003},  {"thinsp", 0x2009}, {"zwnj", 0x200C}, {"zwj", 0x200D},
    {"larr", 0x2190},  {"rarr", 0x2192},  {"frac12", 0xBD},  {"micro", 0xB5},
}};

// Elements whose content is never visible text.
constexpr std::array<std::string_view, 6> kHiddenElements{"script", "style", "noscript", "template", "title", "svg"};

// Elements that do not separate words, e.g. "<b>he</b>llo" -> "hello".
constexpr std::array<std::string_view, 18> kInlineElements{
    "a",   "abbr", "b",    "bdi",   "bdo",  "cite", "code", "em",  "i",
    "kbd", "mark", "q",    "s",     "samp", "small", "span", "strong", "u",
};

bool contains(auto const& list, std::string_view name) {
    return std::find(list.begin(), list.end(), name) != list.end();
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool iequals_at(std::string_view s, std::size_t pos, std::string_view word) {
    if (pos + word.size() > s.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i)
        if (lower(s[pos + i]) != word[i]) return false;
    return true;
}

// Position just after the '>' closing a tag that starts at `pos`, honouring quoted attributes.
std::size_t tag_end(std::string_view html, std::size_t pos) {
    char quote = 0;
    for (std::size_t i = pos; i < html.size(); ++i) {
        char c = html[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i + 1;
        }
    }
    return html.size();
}

// Decodes one entity at html[pos] == '&'; returns consumed length, 0 if not an entity.
std::size_t decode_entity(std::string_view html, std::size_t pos, std::string& out) {
    std::size_t semi = html.find(';', pos);
    if (semi == std::string_view::npos || semi - pos > 12) return 0;
    std::string_view body = html.substr(pos + 1, semi - pos - 1);
    if (body.size() >= 2 && body[0] == '#') {
        std::uint32_t value = 0;
        const char* first = body.data() + 1;
        int base = 10;
        if (body[1] == 'x' || body[1] == 'X') {
            ++first;
            base = 16;
        }
        auto [p, ec] = std::from_chars(first, body.data() + body.size(), value, base);
        if (ec != std::errc() || p != body.data() + body.size()) return 0;
        if (value == 0 || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) value = 0xFFFD;
        utf8::append(out, static_cast<char32_t>(value));
        return semi - pos + 1;
    }
    for (const auto& e : kEntities) {
        if (e.name == body) {
            utf8::append(out, e.cp);
            return semi - pos + 1;
        }
    }
    return 0;
}

std::string collapse_whitespace(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending = false;
    for (char32_t cp : utf8::decode(raw)) {
        if (utf8::is_space(cp) || cp == 0xAD || cp == 0x200B || cp == 0x200C || cp == 0x200D) {
            if (cp != 0xAD) pending = true;
            continue;
        }
        if (pending && !out.empty()) out.push_back(' ');
        pending = false;
        utf8::append(out, cp);
    }
    return out;
}

// Decoded "&lt;" can rebuild markup-looking text; break "</" and "<script" so
// the output never contains either.
void defuse_markup(std::string& text) {
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] != '<') continue;
        if (text[i + 1] == '/' || iequals_at(text, i + 1, "script")) text[i] = ' ';
    }
}

}  // namespace

std::string extract_text(std::string_view html) {
    std::string raw;
    raw.reserve(html.size());
    std::size_t i = 0;
    const std::size_t n = html.size();
    while (i < n) {
        char c = html[i];
        if (c == '&') {
            if (std::size_t used = decode_entity(html, i, raw)) {
                i += used;
                continue;
            }
            raw.push_back(c);
            ++i;
            continue;
        }
        if (c != '<' || i + 1 >= n) {
            raw.push_back(c);
            ++i;
            continue;
        }
        char next = html[i + 1];
        if (html.compare(i, 4, "<!--") == 0) {
            std::size_t close = html.find("-->", i + 4);
            i = close == std::string_view::npos ? n : close + 3;
            raw.push_back(' ');
            continue;
        }
        if (next == '!' || next == '?') {
            i = tag_end(html, i + 2);
            raw.push_back(' ');
            continue;
        }
        bool closing = next == '/';
        std::size_t name_start = i + (closing ? 2 : 1);
        if (name_start >= n || !std::isalpha(static_cast<unsigned char>(html[name_start]))) {
            if (closing) {  // "</ ..." and "</>" are bogus comments
                i = tag_end(html, i + 2);
                raw.push_back(' ');
                continue;
            }
            raw.push_back(c);  // a literal '<'
            ++i;
            continue;
        }
        std::size_t name_end = name_start;
        while (name_end < n && (std::isalnum(static_cast<unsigned char>(html[name_end])) || html[name_end] == '-'))
            ++name_end;
        std::string name;
        for (std::size_t k = name_start; k < name_end; ++k) name.push_back(lower(html[k]));
        i = tag_end(html, name_end);

        if (!closing && contains(kHiddenElements, name)) {
            bool self_closing = i >= 2 && html[i - 2] == '/' && html[i - 1] == '>';
            if (!self_closing) {
                // Skip to the matching end tag; an unterminated element hides the rest.
                std::size_t search = i;
                std::size_t found = n;
                while ((search = html.find("</", search)) != std::string_view::npos) {
                    if (iequals_at(html, search + 2, name)) {
                        found = search;
                        break;
                    }
                    search += 2;
                }
                i = found == n ? n : tag_end(html, found + 2);
            }
            raw.push_back(' ');
            continue;
        }
        if (!contains(kInlineElements, name)) raw.push_back(' ');
    }
    std::string text = collapse_whitespace(raw);
    defuse_markup(text);
    // defusing can introduce a leading/trailing space or a double space
    return collapse_whitespace(text);
}

}  // namespace campusrag::ingest
