#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"
#include "triage/ranker.hpp"

namespace triage {

struct PerK {
    double hits = 0.0;  // fractional after run averaging
    std::size_t n = 0;
    double rate = 0.0;
};

// Hit@K table for one assigner over one evaluation set (or averaged runs).
struct EvalReport {
    std::string project;
    std::string assigner;
    int runs = 1;
    bool averaged_over_runs = false;
    std::vector<PerK> per_k;  // index 0 = K=1

    int k_max() const { return static_cast<int>(per_k.size()); }
    double rate_at(int k) const { return per_k.at(static_cast<std::size_t>(k - 1)).rate; }
};

// Per-case Eq. 1 indicator: 1 iff the truth appears among the first
// min(k, |items|) recommendations.
inline int hit_at_k(const Ranking& ranking, const DeveloperId& truth, int k) {
    if (k < 1) throw UsageError("hit_at_k requires k >= 1");
    std::size_t limit = std::min(static_cast<std::size_t>(k), ranking.items.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (ranking.items[i].key == truth.key) return 1;
    }
    return 0;
}

inline EvalReport evaluate(const std::vector<Ranking>& rankings,
                           const std::unordered_map<std::string, DeveloperId>& truths,
                           int k_max = 10, std::string project = "", std::string assigner = "") {
    if (k_max < 1) throw UsageError("evaluate requires k_max >= 1");
    if (rankings.size() != truths.size())
        throw DataError("rankings and truths cover different issue sets");
    std::unordered_set<std::string> seen;
    for (const auto& r : rankings) {
        if (!truths.count(r.issue_id))
            throw DataError("no ground truth for issue id: " + r.issue_id);
        if (!seen.insert(r.issue_id).second)
            throw DataError("duplicate ranking for issue id: " + r.issue_id);
    }

    EvalReport report;
    report.project = std::move(project);
    report.assigner = std::move(assigner);
    report.runs = 1;
    report.per_k.resize(static_cast<std::size_t>(k_max));
    const std::size_t n = rankings.size();
    for (int k = 1; k <= k_max; ++k) {
        std::size_t hits = 0;
        for (const auto& r : rankings) hits += static_cast<std::size_t>(hit_at_k(r, truths.at(r.issue_id), k));
        auto& cell = report.per_k[static_cast<std::size_t>(k - 1)];
        cell.hits = static_cast<double>(hits);
        cell.n = n;
        cell.rate = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
    }
    return report;
}

// Arithmetic mean of per-K rates across runs; requires identical shape.
inline EvalReport average_runs(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw UsageError("average_runs over zero reports");
    const auto& first = reports.front();
    for (const auto& r : reports) {
        if (r.project != first.project || r.assigner != first.assigner ||
            r.per_k.size() != first.per_k.size())
            throw DataError("average_runs over mismatched reports");
        for (std::size_t i = 0; i < r.per_k.size(); ++i)
            if (r.per_k[i].n != first.per_k[i].n)
                throw DataError("average_runs requires equal n across runs");
    }
    EvalReport avg = first;
    avg.runs = static_cast<int>(reports.size());
    avg.averaged_over_runs = true;
    for (std::size_t i = 0; i < avg.per_k.size(); ++i) {
        double hits = 0.0, rate = 0.0;
        for (const auto& r : reports) {
            hits += r.per_k[i].hits;
            rate += r.per_k[i].rate;
        }
        avg.per_k[i].hits = hits / static_cast<double>(reports.size());
        avg.per_k[i].rate = rate / static_cast<double>(reports.size());
    }
    return avg;
}

// ---- Relative improvement (the tables' Improve column) ----

inline double relative_improvement(double subject, double reference) {
    if (!(reference > 0.0)) throw DataError("relative improvement undefined for reference <= 0");
    return 100.0 * (subject - reference) / reference;
}

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

// "+187.8%" presentation, one decimal; "n/a" when the reference is zero.
inline std::string format_improvement(double subject, double reference) {
    if (!(reference > 0.0)) return "n/a";
    double pct = round1(relative_improvement(subject, reference));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f%%", pct);
    return buf;
}

// ---- Comparison tables ----

struct ComparisonColumn {
    std::string name;
    std::vector<double> rates;  // index 0 = K=1
};

// K rows by named columns; the Improve column reads subject (first column)
// against the designated reference column.
struct ComparisonTable {
    std::string project;
    int k_max = 10;
    std::vector<ComparisonColumn> columns;
    std::string reference;

    const ComparisonColumn& column(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return c;
        throw DataError("comparison table has no column: " + name);
    }

    friend bool operator==(const ComparisonTable& a, const ComparisonTable& b) {
        if (a.project != b.project || a.k_max != b.k_max || a.reference != b.reference ||
            a.columns.size() != b.columns.size())
            return false;
        for (std::size_t i = 0; i < a.columns.size(); ++i) {
            if (a.columns[i].name != b.columns[i].name || a.columns[i].rates != b.columns[i].rates)
                return false;
        }
        return true;
    }
};

inline ComparisonTable build_comparison(const std::vector<EvalReport>& reports,
                                        const std::string& reference_name) {
    if (reports.size() < 2) throw UsageError("comparison needs at least two reports");
    ComparisonTable table;
    table.project = reports.front().project;
    table.k_max = reports.front().k_max();
    std::size_t shared_n = 0;
    for (const auto& r : reports) {
        if (r.project != table.project)
            throw DataError("mismatched projects across reports: " + r.project + " vs " +
                            table.project);
        if (r.k_max() != table.k_max) throw DataError("mismatched K ranges across reports");
        // published-constants columns carry n = 0; measured columns must agree
        std::size_t n = r.per_k.empty() ? 0 : r.per_k.front().n;
        if (n > 0) {
            if (shared_n == 0) shared_n = n;
            if (n != shared_n) throw DataError("mismatched evaluation sizes across reports");
        }
        ComparisonColumn col;
        col.name = r.assigner;
        for (const auto& cell : r.per_k) col.rates.push_back(cell.rate);
        table.columns.push_back(std::move(col));
    }
    table.reference = reference_name;
    table.column(reference_name);  // must exist
    return table;
}

// Subject-vs-reference improvement per K; nullopt where the reference is 0.
inline std::vector<std::optional<double>> improvement_column(const ComparisonTable& table) {
    const auto& subject = table.columns.front();
    const auto& reference = table.column(table.reference);
    std::vector<std::optional<double>> out;
    for (int k = 0; k < table.k_max; ++k) {
        double ref = reference.rates[static_cast<std::size_t>(k)];
        if (ref > 0.0)
            out.push_back(relative_improvement(subject.rates[static_cast<std::size_t>(k)], ref));
        else
            out.push_back(std::nullopt);
    }
    return out;
}

namespace detail {

// Lossless double text round-trip for the machine CSV.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

enum class ReportFormat { csv, markdown };

inline void emit_report(const ComparisonTable& table, ReportFormat format,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report: " + path.string());
    auto improve = improvement_column(table);

    if (format == ReportFormat::csv) {
        out << "k";
        for (const auto& c : table.columns) out << ',' << c.name;
        out << ",improve_pct\n";
        for (int k = 1; k <= table.k_max; ++k) {
            out << k;
            for (const auto& c : table.columns)
                out << ',' << detail::format_double(c.rates[static_cast<std::size_t>(k - 1)]);
            const auto& cell = improve[static_cast<std::size_t>(k - 1)];
            out << ',' << (cell ? detail::format_double(round1(*cell)) : "n/a") << '\n';
        }
    } else {
        out << "| K |";
        for (const auto& c : table.columns) out << ' ' << c.name << " |";
        out << " Improve |\n|---|";
        for (std::size_t i = 0; i < table.columns.size(); ++i) out << "---|";
        out << "---|\n";
        char buf[32];
        for (int k = 1; k <= table.k_max; ++k) {
            out << "| " << k << " |";
            for (const auto& c : table.columns) {
                std::snprintf(buf, sizeof(buf), "%.4f", c.rates[static_cast<std::size_t>(k - 1)]);
                out << ' ' << buf << " |";
            }
            const auto& cell = improve[static_cast<std::size_t>(k - 1)];
            if (cell) {
                std::snprintf(buf, sizeof(buf), "%+.1f%%", round1(*cell));
                out << ' ' << buf << " |\n";
            } else {
                out << " n/a |\n";
            }
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

// Companion long-format data for external plotting: one (k, assigner, rate)
// row per cell.
inline void write_plot_data_csv(const ComparisonTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write plot data: " + path.string());
    out << "k,assigner,rate\n";
    for (const auto& c : table.columns) {
        for (int k = 1; k <= table.k_max; ++k)
            out << k << ',' << c.name << ','
                << detail::format_double(c.rates[static_cast<std::size_t>(k - 1)]) << '\n';
    }
}

inline ComparisonTable load_comparison_csv(const std::filesystem::path& path,
                                           std::string project = "",
                                           std::string reference = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read comparison csv: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty comparison csv: " + path.string());
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 3 || header.front() != "k" || header.back() != "improve_pct")
        throw DataError("unexpected comparison csv header in " + path.string());

    ComparisonTable table;
    table.project = std::move(project);
    table.columns.resize(header.size() - 2);
    for (std::size_t i = 0; i < table.columns.size(); ++i) table.columns[i].name = header[i + 1];
    int rows = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // k
        for (auto& col : table.columns) {
            if (!std::getline(ss, cell, ','))
                throw DataError("short comparison csv row in " + path.string());
            col.rates.push_back(std::stod(cell));
        }
        ++rows;
    }
    table.k_max = rows;
    table.reference = reference.empty() ? table.columns.back().name : std::move(reference);
    return table;
}

// ---- EvalReport (de)serialization ----

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["project"] = report.project;
    j["assigner"] = report.assigner;
    j["runs"] = report.runs;
    j["averaged_over_runs"] = report.averaged_over_runs;
    auto per_k = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.per_k.size(); ++i) {
        nlohmann::ordered_json cell;
        cell["k"] = i + 1;
        cell["hits"] = report.per_k[i].hits;
        cell["n"] = report.per_k[i].n;
        cell["rate"] = report.per_k[i].rate;
        per_k.push_back(cell);
    }
    j["per_k"] = per_k;
    return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport report;
    try {
        report.project = j.at("project").get<std::string>();
        report.assigner = j.at("assigner").get<std::string>();
        report.runs = j.at("runs").get<int>();
        report.averaged_over_runs = j.at("averaged_over_runs").get<bool>();
        for (const auto& cell : j.at("per_k")) {
            PerK k;
            k.hits = cell.at("hits").get<double>();
            k.n = cell.at("n").get<std::size_t>();
            k.rate = cell.at("rate").get<double>();
            report.per_k.push_back(k);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed eval report: ") + e.what());
    }
    return report;
}

inline void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write eval report: " + path.string());
    out << eval_report_to_json(report).dump(2) << '\n';
}

inline EvalReport load_eval_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read eval report: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("eval report is not valid JSON: " + path.string());
    return eval_report_from_json(j);
}

}  // namespace triage
