#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/errors.hpp"

namespace triage {

inline std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n\v\f";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Developer identifier with a lowercased matching key; the raw casing is
// preserved for output fidelity. Two identifiers are equal iff keys are equal.
struct DeveloperId {
    std::string raw;
    std::string key;

    friend bool operator==(const DeveloperId& a, const DeveloperId& b) { return a.key == b.key; }
    friend bool operator!=(const DeveloperId& a, const DeveloperId& b) { return !(a == b); }
};

inline DeveloperId normalize_identifier(std::string_view raw) {
    auto t = trim(raw);
    if (t.empty()) throw DataError("developer identifier empty after trimming");
    return DeveloperId{std::string(t), ascii_lower(t)};
}

// ---- UTC timestamps (seconds precision) ----

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yy + (m <= 2 ? 1 : 0));
}

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline unsigned days_in_month(int y, unsigned m) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return lengths[m - 1];
}

// Accepts ISO-8601 ("2021-03-04T05:06:07Z", offsets, optional fraction,
// date-only) or a bare integer taken as epoch seconds. Returns nullopt on
// anything else; ingestion treats that as a droppable record.
inline std::optional<std::int64_t> parse_utc_timestamp(std::string_view text) {
    auto s = trim(text);
    if (s.empty()) return std::nullopt;

    auto all_digits = [](std::string_view v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); });
    };
    if (all_digits(s) || (s.size() > 1 && s[0] == '-' && all_digits(s.substr(1)))) {
        try {
            return static_cast<std::int64_t>(std::stoll(std::string(s)));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    auto read_uint = [&](std::size_t pos, std::size_t len, int& out) -> bool {
        if (pos + len > s.size()) return false;
        int value = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
            value = value * 10 + (s[i] - '0');
        }
        out = value;
        return true;
    };

    int year = 0, month = 0, day = 0;
    if (s.size() < 10) return std::nullopt;
    if (!read_uint(0, 4, year) || s[4] != '-' || !read_uint(5, 2, month) || s[7] != '-' ||
        !read_uint(8, 2, day)) {
        return std::nullopt;
    }
    if (month < 1 || month > 12) return std::nullopt;
    if (day < 1 || static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month)))
        return std::nullopt;

    int hh = 0, mm = 0, ss = 0;
    std::int64_t offset_seconds = 0;
    if (s.size() > 10) {
        char sep = s[10];
        if (sep != 'T' && sep != 't' && sep != ' ') return std::nullopt;
        if (!read_uint(11, 2, hh) || s.size() < 19 || s[13] != ':' || !read_uint(14, 2, mm) ||
            s[16] != ':' || !read_uint(17, 2, ss)) {
            return std::nullopt;
        }
        if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
        std::size_t pos = 19;
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            std::size_t frac_start = pos;
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos == frac_start) return std::nullopt;
        }
        if (pos < s.size()) {
            char c = s[pos];
            if (c == 'Z' || c == 'z') {
                ++pos;
            } else if (c == '+' || c == '-') {
                int sign = c == '+' ? 1 : -1;
                ++pos;
                int oh = 0, om = 0;
                if (!read_uint(pos, 2, oh)) return std::nullopt;
                pos += 2;
                if (pos < s.size() && s[pos] == ':') ++pos;
                if (pos < s.size()) {
                    if (!read_uint(pos, 2, om)) return std::nullopt;
                    pos += 2;
                }
                if (oh > 23 || om > 59) return std::nullopt;
                offset_seconds = sign * (oh * 3600LL + om * 60LL);
            } else {
                return std::nullopt;
            }
        }
        if (pos != s.size()) return std::nullopt;
    }

    std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return days * 86400 + hh * 3600 + mm * 60 + ss - offset_seconds;
}

inline std::string format_utc_timestamp(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                  static_cast<int>(rem % 60));
    return buf;
}

// ---- Corpus model ----

struct IssueReport {
    std::string id;
    std::int64_t created_at = 0;  // UTC epoch seconds
    std::string title;
    std::string description;
    DeveloperId assignee;
    std::optional<std::int64_t> interactions;

    // Title and description combined, the unit all prompt/feature text is built from.
    std::string issue_text() const { return title + "\n" + description; }
};

struct Corpus {
    std::string project;
    std::vector<IssueReport> reports;

    std::unordered_set<std::string> developer_keys() const {
        std::unordered_set<std::string> keys;
        for (const auto& r : reports) keys.insert(r.assignee.key);
        return keys;
    }

    // Unique developers in first-appearance order.
    std::vector<DeveloperId> unique_developers() const {
        std::vector<DeveloperId> devs;
        std::unordered_set<std::string> seen;
        for (const auto& r : reports) {
            if (seen.insert(r.assignee.key).second) devs.push_back(r.assignee);
        }
        return devs;
    }
};

enum class CorpusFormat { jsonl, csv };

struct IngestOptions {
    std::string project;
    // Fraction of records allowed to be malformed/dropped before ingest fails
    // outright. 1.0 = skip-and-count, never fail.
    double malformed_tolerance = 1.0;
};

struct IngestResult {
    Corpus corpus;
    std::size_t dropped = 0;
};

namespace detail {

struct RawRecord {
    std::string id;
    std::optional<std::int64_t> created_at;
    std::string title;
    std::string description;
    std::string assignee;
    std::optional<std::int64_t> interactions;
    bool malformed = false;
};

inline RawRecord record_from_json(const nlohmann::json& j) {
    RawRecord rec;
    if (!j.is_object()) {
        rec.malformed = true;
        return rec;
    }
    auto get_string = [&](const char* field) -> std::optional<std::string> {
        auto it = j.find(field);
        if (it == j.end() || it->is_null()) return std::nullopt;
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
        return std::nullopt;
    };
    auto id = get_string("id");
    if (!id || trim(*id).empty()) {
        rec.malformed = true;
        return rec;
    }
    rec.id = std::string(trim(*id));

    auto created_it = j.find("created_at");
    if (created_it != j.end()) {
        if (created_it->is_string())
            rec.created_at = parse_utc_timestamp(created_it->get<std::string>());
        else if (created_it->is_number_integer())
            rec.created_at = created_it->get<std::int64_t>();
    }
    rec.title = get_string("title").value_or("");
    rec.description = get_string("description").value_or("");
    rec.assignee = get_string("assignee").value_or("");

    auto inter_it = j.find("interactions");
    if (inter_it != j.end() && !inter_it->is_null()) {
        if (inter_it->is_number_integer() && inter_it->get<std::int64_t>() >= 0) {
            rec.interactions = inter_it->get<std::int64_t>();
        } else {
            rec.malformed = true;
        }
    }
    return rec;
}

// RFC 4180: quoted fields, "" escapes, embedded newlines, CRLF or LF rows.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        bool all_empty = std::all_of(row.begin(), row.end(), [](const std::string& f) { return f.empty(); });
        if (!(row.size() == 1 && all_empty)) rows.push_back(row);
        row.clear();
    };

    int ci;
    while ((ci = in.get()) != EOF) {
        char c = static_cast<char>(ci);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_row();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

inline std::vector<RawRecord> read_jsonl_records(std::istream& in, std::size_t& malformed_lines) {
    std::vector<RawRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) {
            ++malformed_lines;
            RawRecord rec;
            rec.malformed = true;
            records.push_back(rec);
            continue;
        }
        records.push_back(record_from_json(j));
    }
    return records;
}

inline std::vector<RawRecord> read_csv_records(std::istream& in) {
    auto rows = parse_csv(in);
    if (rows.empty()) throw DataError("csv corpus has no header row");
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[ascii_lower(trim(rows[0][i]))] = i;
    for (const char* required : {"id", "created_at", "title", "description", "assignee"}) {
        if (!col.count(required)) throw DataError(std::string("csv corpus missing column: ") + required);
    }
    bool has_interactions = col.count("interactions") > 0;

    std::vector<RawRecord> records;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        RawRecord rec;
        auto cell = [&](const char* name) -> std::string {
            std::size_t idx = col.at(name);
            return idx < cells.size() ? cells[idx] : std::string();
        };
        rec.id = std::string(trim(cell("id")));
        if (rec.id.empty()) {
            rec.malformed = true;
            records.push_back(rec);
            continue;
        }
        rec.created_at = parse_utc_timestamp(cell("created_at"));
        rec.title = cell("title");
        rec.description = cell("description");
        rec.assignee = cell("assignee");
        if (has_interactions) {
            auto raw = std::string(trim(cells.size() > col.at("interactions") ? cells[col.at("interactions")] : ""));
            if (!raw.empty()) {
                try {
                    std::int64_t v = std::stoll(raw);
                    if (v < 0)
                        rec.malformed = true;
                    else
                        rec.interactions = v;
                } catch (const std::exception&) {
                    rec.malformed = true;
                }
            }
        }
        records.push_back(rec);
    }
    return records;
}

}  // namespace detail

// Loads a tracker export. Records missing an assignee or a parseable
// timestamp are dropped and counted; a duplicate id among kept reports is a
// hard error.
inline IngestResult ingest(const std::string& path, CorpusFormat format, IngestOptions options = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open corpus file: " + path);

    std::size_t malformed_lines = 0;
    std::vector<detail::RawRecord> records = format == CorpusFormat::jsonl
                                                 ? detail::read_jsonl_records(in, malformed_lines)
                                                 : detail::read_csv_records(in);

    IngestResult result;
    result.corpus.project =
        options.project.empty() ? std::filesystem::path(path).stem().string() : options.project;

    std::unordered_set<std::string> seen_ids;
    for (const auto& rec : records) {
        if (rec.malformed || !rec.created_at || trim(rec.assignee).empty()) {
            ++result.dropped;
            continue;
        }
        IssueReport report;
        report.id = rec.id;
        report.created_at = *rec.created_at;
        report.title = rec.title;
        report.description = rec.description;
        report.assignee = normalize_identifier(rec.assignee);
        report.interactions = rec.interactions;
        if (!seen_ids.insert(report.id).second)
            throw DataError("duplicate issue id in corpus: " + report.id);
        result.corpus.reports.push_back(std::move(report));
    }

    if (!records.empty() &&
        static_cast<double>(result.dropped) >
            options.malformed_tolerance * static_cast<double>(records.size())) {
        throw DataError("malformed records exceed tolerance: " + std::to_string(result.dropped) +
                        " of " + std::to_string(records.size()));
    }
    return result;
}

// Canonical serialization; ingest(write(corpus)) round-trips byte-for-byte.
inline void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& r : corpus.reports) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["created_at"] = format_utc_timestamp(r.created_at);
        j["title"] = r.title;
        j["description"] = r.description;
        j["assignee"] = r.assignee.raw;
        if (r.interactions) j["interactions"] = *r.interactions;
        out << j.dump() << '\n';
    }
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
    std::ostringstream out;
    write_corpus_jsonl(corpus, out);
    return out.str();
}

// ---- Dataset statistics ----

struct CorpusStats {
    std::size_t developers = 0;
    std::size_t reports = 0;
    std::int64_t relationships = 0;
    double density = 0.0;
};

inline double assignment_density(std::size_t developers, std::size_t reports,
                                 std::int64_t relationships) {
    if (developers == 0 || reports == 0) throw DataError("density undefined for empty corpus");
    return static_cast<double>(relationships) /
           (static_cast<double>(developers) * static_cast<double>(reports));
}

inline double round4(double x) { return std::round(x * 10000.0) / 10000.0; }

// Relationships fall back to one assignment per report when the export
// carries no interaction counts.
inline CorpusStats corpus_stats(const Corpus& corpus) {
    if (corpus.reports.empty()) throw DataError("corpus_stats over empty corpus");
    CorpusStats stats;
    stats.reports = corpus.reports.size();
    stats.developers = corpus.developer_keys().size();
    for (const auto& r : corpus.reports) stats.relationships += r.interactions.value_or(1);
    stats.density = assignment_density(stats.developers, stats.reports, stats.relationships);
    return stats;
}

}  // namespace triage
