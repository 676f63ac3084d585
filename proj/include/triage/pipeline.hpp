#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"

namespace triage {

enum class SplitProtocol { chronological, rotated_fold };

inline std::string to_string(SplitProtocol p) {
    return p == SplitProtocol::chronological ? "chronological" : "rotated-fold";
}

inline SplitProtocol split_protocol_from_string(const std::string& s) {
    if (s == "chronological") return SplitProtocol::chronological;
    if (s == "rotated-fold") return SplitProtocol::rotated_fold;
    throw UsageError("unknown split protocol: " + s);
}

// Exact id membership of one train/val/test partition; the unit of
// experiment provenance.
struct SplitManifest {
    SplitProtocol protocol = SplitProtocol::chronological;
    int run_index = 0;
    std::uint64_t seed = 3407;
    int filter_threshold = 10;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;

    friend bool operator==(const SplitManifest& a, const SplitManifest& b) {
        return a.protocol == b.protocol && a.run_index == b.run_index && a.seed == b.seed &&
               a.filter_threshold == b.filter_threshold && a.train_ids == b.train_ids &&
               a.val_ids == b.val_ids && a.test_ids == b.test_ids;
    }
};

struct FilterResult {
    Corpus corpus;
    std::size_t removed_reports = 0;
    std::size_t removed_developers = 0;
};

// Drops every report whose assignee resolved fewer than `threshold` reports.
inline FilterResult filter_by_developer_frequency(const Corpus& corpus, int threshold) {
    if (threshold < 1) throw UsageError("filter threshold must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : corpus.reports) ++counts[r.assignee.key];

    FilterResult result;
    result.corpus.project = corpus.project;
    std::unordered_set<std::string> removed_devs;
    for (const auto& r : corpus.reports) {
        if (counts[r.assignee.key] >= static_cast<std::size_t>(threshold)) {
            result.corpus.reports.push_back(r);
        } else {
            ++result.removed_reports;
            removed_devs.insert(r.assignee.key);
        }
    }
    result.removed_developers = removed_devs.size();
    if (result.corpus.reports.empty())
        throw DataError("developer-frequency filter with threshold " + std::to_string(threshold) +
                        " removed every report");
    return result;
}

// Indices of corpus.reports sorted by (created_at, id); id breaks ties so
// ordering is reproducible.
inline std::vector<std::size_t> chronological_order(const Corpus& corpus) {
    std::vector<std::size_t> order(corpus.reports.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = corpus.reports[a];
        const auto& rb = corpus.reports[b];
        if (ra.created_at != rb.created_at) return ra.created_at < rb.created_at;
        return ra.id < rb.id;
    });
    return order;
}

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// 80/10/10 with round-to-nearest on the train and val boundaries; the
// remainder goes to test.
inline SplitSizes split_sizes(std::size_t n) {
    SplitSizes sizes;
    sizes.train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    sizes.val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    if (sizes.train + sizes.val > n) throw DataError("split sizes exceed corpus size");
    sizes.test = n - sizes.train - sizes.val;
    return sizes;
}

inline SplitManifest chronological_split(const Corpus& corpus, std::uint64_t seed = 3407,
                                         int filter_threshold = 10) {
    if (corpus.reports.size() < 10)
        throw DataError("chronological split needs at least 10 reports, got " +
                        std::to_string(corpus.reports.size()));
    auto order = chronological_order(corpus);
    auto sizes = split_sizes(order.size());

    SplitManifest manifest;
    manifest.protocol = SplitProtocol::chronological;
    manifest.run_index = 0;
    manifest.seed = seed;
    manifest.filter_threshold = filter_threshold;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::string& id = corpus.reports[order[i]].id;
        if (i < sizes.train)
            manifest.train_ids.push_back(id);
        else if (i < sizes.train + sizes.val)
            manifest.val_ids.push_back(id);
        else
            manifest.test_ids.push_back(id);
    }
    return manifest;
}

namespace detail {

// Hand-rolled Fisher-Yates so fold rotation is identical across standard
// libraries. Modulo bias is irrelevant at these sizes.
inline void deterministic_shuffle(std::vector<std::size_t>& values, std::uint64_t seed) {
    std::uint64_t state = seed ? seed : 0x9e3779b97f4a7c15ULL;
    auto next = [&state]() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return state;
    };
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(next() % i);
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace detail

// Run 0 is the chronological split. Runs k >= 1 rotate the evaluation fold:
// the test block becomes a different contiguous test-sized window inside the
// chronologically-last 20% region, and val is the remainder of that region,
// so every train report still precedes every evaluation report.
inline std::vector<SplitManifest> multi_run_folds(const Corpus& corpus, int runs,
                                                  std::uint64_t seed,
                                                  int filter_threshold = 10) {
    if (runs < 1) throw UsageError("runs must be >= 1");
    SplitManifest base = chronological_split(corpus, seed, filter_threshold);

    const std::size_t fold = base.test_ids.size();
    std::vector<std::string> region = base.val_ids;
    region.insert(region.end(), base.test_ids.begin(), base.test_ids.end());
    const std::size_t positions = region.size() - fold + 1;  // distinct available folds
    if (static_cast<std::size_t>(runs) > positions)
        throw UsageError("requested " + std::to_string(runs) + " runs but only " +
                         std::to_string(positions) + " distinct evaluation folds exist");

    std::vector<SplitManifest> manifests;
    manifests.push_back(base);

    // Chronological run occupies the last window; remaining offsets are drawn
    // in a seed-deterministic order.
    std::vector<std::size_t> offsets;
    for (std::size_t s = 0; s + 1 < positions; ++s) offsets.push_back(s);
    detail::deterministic_shuffle(offsets, seed);

    for (int k = 1; k < runs; ++k) {
        std::size_t start = offsets[static_cast<std::size_t>(k - 1)];
        SplitManifest m;
        m.protocol = SplitProtocol::rotated_fold;
        m.run_index = k;
        m.seed = seed;
        m.filter_threshold = filter_threshold;
        m.train_ids = base.train_ids;
        for (std::size_t i = 0; i < region.size(); ++i) {
            if (i >= start && i < start + fold)
                m.test_ids.push_back(region[i]);
            else
                m.val_ids.push_back(region[i]);
        }
        manifests.push_back(std::move(m));
    }
    return manifests;
}

// Materializes the reports named by a manifest id list, in list order.
inline std::vector<IssueReport> select_reports(const Corpus& corpus,
                                               const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < corpus.reports.size(); ++i) by_id[corpus.reports[i].id] = i;
    std::vector<IssueReport> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("manifest references unknown report id: " + id);
        out.push_back(corpus.reports[it->second]);
    }
    return out;
}

inline nlohmann::ordered_json manifest_to_json(const SplitManifest& m) {
    nlohmann::ordered_json j;
    j["protocol"] = to_string(m.protocol);
    j["run_index"] = m.run_index;
    j["seed"] = m.seed;
    j["filter_threshold"] = m.filter_threshold;
    j["train_ids"] = m.train_ids;
    j["val_ids"] = m.val_ids;
    j["test_ids"] = m.test_ids;
    return j;
}

inline SplitManifest manifest_from_json(const nlohmann::json& j) {
    SplitManifest m;
    try {
        m.protocol = split_protocol_from_string(j.at("protocol").get<std::string>());
        m.run_index = j.at("run_index").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.filter_threshold = j.at("filter_threshold").get<int>();
        m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        m.val_ids = j.at("val_ids").get<std::vector<std::string>>();
        m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed split manifest: ") + e.what());
    }
    return m;
}

inline void save_manifest(const SplitManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << manifest_to_json(m).dump(2) << '\n';
}

inline SplitManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read manifest: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("manifest is not valid JSON: " + path.string());
    return manifest_from_json(j);
}

}  // namespace triage
