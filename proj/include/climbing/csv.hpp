#pragma once

// Minimal RFC-4180 CSV reading and writing.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "climbing/error.hpp"

namespace climbing::csv {

struct Record {
    std::size_t line = 0; // 1-based line on which the record starts
    std::vector<std::string> fields;
};

// Parses a whole document. Quoted fields may contain commas, doubled quotes
// and line breaks. CRLF and LF line endings are both accepted; blank lines
// are skipped.
inline std::vector<Record> parse(std::string_view text) {
    std::vector<Record> records;
    std::size_t line = 1;
    std::size_t i = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3; // UTF-8 BOM

    while (i < text.size()) {
        Record rec;
        rec.line = line;
        std::string field;
        bool end_of_record = false;
        while (!end_of_record) {
            field.clear();
            if (i < text.size() && text[i] == '"') {
                ++i;
                bool closed = false;
                while (i < text.size()) {
                    const char ch = text[i];
                    if (ch == '"') {
                        if (i + 1 < text.size() && text[i + 1] == '"') {
                            field.push_back('"');
                            i += 2;
                        } else {
                            ++i;
                            closed = true;
                            break;
                        }
                    } else {
                        if (ch == '\n') ++line;
                        field.push_back(ch);
                        ++i;
                    }
                }
                if (!closed) {
                    throw ParseError("line " + std::to_string(rec.line) + ": unterminated quoted field");
                }
                if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                    throw ParseError("line " + std::to_string(line) + ": unexpected character after closing quote");
                }
            } else {
                while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                    if (text[i] == '"') {
                        throw ParseError("line " + std::to_string(line) + ": quote inside unquoted field");
                    }
                    field.push_back(text[i++]);
                }
            }
            rec.fields.push_back(field);
            if (i >= text.size()) {
                end_of_record = true;
            } else if (text[i] == ',') {
                ++i;
            } else {
                if (text[i] == '\r') ++i;
                if (i < text.size() && text[i] == '\n') ++i;
                ++line;
                end_of_record = true;
            }
        }
        const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
        if (!blank) records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<Record> read(std::istream& in) {
    if (!in) throw ParseError("unreadable input stream");
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) throw ParseError("error while reading input stream");
    return parse(text);
}

// Maps header names to column positions; throws when a required column is missing.
class Header {
public:
    Header(const Record& header, std::initializer_list<std::string_view> required) : names_(header.fields) {
        for (auto& name : names_) {
            while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
            while (!name.empty() && (name.front() == ' ' || name.front() == '\t')) name.erase(name.begin());
        }
        for (auto col : required) {
            if (!find(col)) throw ParseError("missing required column '" + std::string(col) + "'");
        }
    }

    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return i;
        }
        return std::nullopt;
    }

    std::size_t at(std::string_view name) const { return *find(name); }
    std::size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
};

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, std::initializer_list<std::string_view> fields) {
    bool first = true;
    for (auto f : fields) {
        if (!first) out << ',';
        out << escape(f);
        first = false;
    }
    out << '\n';
}

// Floating-point text with 9 significant digits.
inline std::string format_real(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
    return value;
}

inline std::optional<double> parse_real(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) return std::nullopt;
    return v;
}

} // namespace climbing::csv
