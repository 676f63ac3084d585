#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"

namespace triage {

// Fixed universe of developer identifiers a system may recommend; anything
// outside it is a hallucination and gets filtered. Immutable once built.
struct CandidateSet {
    std::string project;
    std::vector<DeveloperId> members;                      // first-appearance order
    std::unordered_map<std::string, std::size_t> lookup;   // key -> members index

    bool contains(std::string_view key) const { return lookup.count(std::string(key)) > 0; }

    std::optional<std::size_t> index_of(std::string_view key) const {
        auto it = lookup.find(std::string(key));
        if (it == lookup.end()) return std::nullopt;
        return it->second;
    }

    const DeveloperId* canonical(std::string_view key) const {
        auto idx = index_of(key);
        return idx ? &members[*idx] : nullptr;
    }

    std::size_t size() const { return members.size(); }
};

// Canonical casing per key = first occurrence in corpus order.
inline CandidateSet build_candidate_set(const Corpus& corpus) {
    if (corpus.reports.empty()) throw DataError("cannot build candidate set from empty corpus");
    CandidateSet set;
    set.project = corpus.project;
    for (const auto& r : corpus.reports) {
        if (!set.lookup.count(r.assignee.key)) {
            set.lookup.emplace(r.assignee.key, set.members.size());
            set.members.push_back(r.assignee);
        }
    }
    return set;
}

// Ordered, duplicate-free recommendation list for one issue. Capped at the
// ten-slot recommendation protocol; short lists stay short.
struct Ranking {
    static constexpr std::size_t kMaxItems = 10;

    std::string issue_id;
    std::vector<DeveloperId> items;
    std::string source;

    bool contains_key(std::string_view key) const {
        return std::any_of(items.begin(), items.end(),
                           [&](const DeveloperId& d) { return d.key == key; });
    }
};

// Splits raw model output on commas/semicolons/whitespace and keeps, in
// first-appearance order, the pieces whose lowercased form is a candidate
// key. Duplicates and non-members are dropped; nothing is padded.
inline Ranking parse_ranked_output(std::string_view raw_output, const CandidateSet& candidates) {
    Ranking ranking;
    std::unordered_set<std::string> taken;
    std::size_t i = 0;
    auto is_delim = [](unsigned char c) {
        return c == ',' || c == ';' || std::isspace(c) != 0;
    };
    while (i < raw_output.size() && ranking.items.size() < Ranking::kMaxItems) {
        while (i < raw_output.size() && is_delim(static_cast<unsigned char>(raw_output[i]))) ++i;
        std::size_t start = i;
        while (i < raw_output.size() && !is_delim(static_cast<unsigned char>(raw_output[i]))) ++i;
        if (i == start) break;
        std::string key = ascii_lower(raw_output.substr(start, i - start));
        const DeveloperId* member = candidates.canonical(key);
        if (member && taken.insert(key).second) ranking.items.push_back(*member);
    }
    return ranking;
}

// Behavioral contract every ranking backend satisfies; outputs obey all
// Ranking invariants and are deterministic given (report, candidates, k).
class Assigner {
public:
    virtual ~Assigner() = default;
    virtual std::string name() const = 0;
    virtual Ranking rank(const IssueReport& report, const CandidateSet& candidates,
                         int k) const = 0;
};

inline std::unordered_map<std::string, std::size_t> build_train_counts(
    const std::vector<IssueReport>& train_reports) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : train_reports) ++counts[r.assignee.key];
    return counts;
}

// Content-blind sanity floor: developers by descending training assignment
// count, ties broken by key.
inline Ranking frequency_baseline_rank(const IssueReport& report, const CandidateSet& candidates,
                                       int k,
                                       const std::unordered_map<std::string, std::size_t>& train_counts) {
    if (k < 1) throw UsageError("rank cutoff k must be >= 1");
    std::vector<std::size_t> order(candidates.members.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto count_of = [&](std::size_t idx) -> std::size_t {
        auto it = train_counts.find(candidates.members[idx].key);
        return it == train_counts.end() ? 0 : it->second;
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        std::size_t ca = count_of(a), cb = count_of(b);
        if (ca != cb) return ca > cb;
        return candidates.members[a].key < candidates.members[b].key;
    });

    Ranking ranking;
    ranking.issue_id = report.id;
    ranking.source = "frequency";
    std::size_t n = std::min({static_cast<std::size_t>(k), Ranking::kMaxItems, order.size()});
    for (std::size_t i = 0; i < n; ++i) ranking.items.push_back(candidates.members[order[i]]);
    return ranking;
}

class FrequencyBaseline : public Assigner {
public:
    explicit FrequencyBaseline(std::unordered_map<std::string, std::size_t> train_counts)
        : train_counts_(std::move(train_counts)) {}

    std::string name() const override { return "frequency"; }

    Ranking rank(const IssueReport& report, const CandidateSet& candidates, int k) const override {
        return frequency_baseline_rank(report, candidates, k, train_counts_);
    }

private:
    std::unordered_map<std::string, std::size_t> train_counts_;
};

// ---- Ranking serialization ----

inline void write_rankings_jsonl(const std::vector<Ranking>& rankings,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write rankings: " + path.string());
    for (const auto& r : rankings) {
        nlohmann::ordered_json j;
        j["issue_id"] = r.issue_id;
        j["source"] = r.source;
        auto items = nlohmann::ordered_json::array();
        for (const auto& d : r.items) items.push_back(d.raw);
        j["items"] = items;
        out << j.dump() << '\n';
    }
}

inline std::vector<Ranking> load_rankings_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read rankings: " + path.string());
    std::vector<Ranking> rankings;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("malformed ranking record in " + path.string());
        Ranking r;
        r.issue_id = j.at("issue_id").get<std::string>();
        r.source = j.at("source").get<std::string>();
        for (const auto& item : j.at("items")) r.items.push_back(normalize_identifier(item.get<std::string>()));
        rankings.push_back(std::move(r));
    }
    return rankings;
}

}  // namespace triage
