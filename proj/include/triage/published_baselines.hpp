#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "triage/errors.hpp"

namespace triage {

// Published Hit@K numbers for the compared systems on EclipseJDT and
// Mozilla. These are consumed as comparison constants only — published,
// not reproduced. Mirrored to data/published_baselines.json.
inline constexpr std::string_view kPublishedBaselinesJson = R"json({
  "note": "published, not reproduced",
  "eclipsejdt": {
    "lia":   [0.449, 0.559, 0.620, 0.660, 0.684, 0.702, 0.713, 0.725, 0.749, 0.774],
    "base":  [0.156, 0.264, 0.344, 0.419, 0.475, 0.523, 0.569, 0.601, 0.633, 0.661],
    "ncgbt": [0.2307, 0.3406, 0.4122, 0.4721, 0.5121, 0.5592, 0.5914, 0.6175, 0.6473, 0.6752],
    "gcbt":  [0.2018, 0.2933, 0.3604, 0.4275, 0.4752, 0.5096, 0.5524, 0.5861, 0.6104, 0.6465],
    "grcnn": [0.1903, 0.2102, 0.3223, 0.3456, 0.3654, 0.3907, 0.4343, 0.4656, 0.5475, 0.5607],
    "cbr":   [0.1356, 0.1668, 0.2377, 0.2551, 0.2670, 0.3296, 0.3895, 0.4027, 0.4637, 0.4965]
  },
  "mozilla": {
    "lia":   [0.733, 0.777, 0.799, 0.810, 0.816, 0.824, 0.830, 0.833, 0.836, 0.839],
    "base":  [0.730, 0.745, 0.758, 0.766, 0.771, 0.776, 0.781, 0.784, 0.789, 0.794],
    "ncgbt": [0.2356, 0.2964, 0.3618, 0.4085, 0.4085, 0.4261, 0.4681, 0.4907, 0.5216, 0.5216],
    "gcbt":  [0.2149, 0.2658, 0.3288, 0.3670, 0.3670, 0.3963, 0.4326, 0.4484, 0.4869, 0.4869],
    "grcnn": [0.1925, 0.2488, 0.2874, 0.3120, 0.3120, 0.3380, 0.3702, 0.3854, 0.4554, 0.4554],
    "cbr":   [0.1207, 0.2031, 0.2200, 0.2699, 0.2832, 0.2945, 0.3173, 0.3223, 0.3469, 0.3813]
  }
})json";

struct BaselineTable {
    std::string note;
    // dataset -> method -> Hit@K for K = 1..10
    std::map<std::string, std::map<std::string, std::array<double, 10>>> rates;

    bool has(const std::string& dataset, const std::string& method) const {
        auto d = rates.find(dataset);
        return d != rates.end() && d->second.count(method) > 0;
    }

    const std::array<double, 10>& at(const std::string& dataset, const std::string& method) const {
        auto d = rates.find(dataset);
        if (d == rates.end()) throw DataError("no published baselines for dataset: " + dataset);
        auto m = d->second.find(method);
        if (m == d->second.end())
            throw DataError("no published baseline method '" + method + "' for " + dataset);
        return m->second;
    }

    // "dataset/method" key form used by the CLI.
    const std::array<double, 10>& at_key(const std::string& key) const {
        auto slash = key.find('/');
        if (slash == std::string::npos)
            throw UsageError("baseline key must look like dataset/method: " + key);
        return at(key.substr(0, slash), key.substr(slash + 1));
    }
};

inline BaselineTable parse_published_baselines(const nlohmann::json& j) {
    BaselineTable table;
    if (!j.is_object()) throw DataError("published baselines must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "note") {
            table.note = it.value().get<std::string>();
            continue;
        }
        for (auto m = it.value().begin(); m != it.value().end(); ++m) {
            const auto& arr = m.value();
            if (!arr.is_array() || arr.size() != 10)
                throw DataError("baseline '" + it.key() + "/" + m.key() +
                                "' must list exactly 10 Hit@K rates");
            std::array<double, 10> rates{};
            for (std::size_t k = 0; k < 10; ++k) rates[k] = arr[k].get<double>();
            table.rates[it.key()][m.key()] = rates;
        }
    }
    return table;
}

inline BaselineTable builtin_published_baselines() {
    return parse_published_baselines(nlohmann::json::parse(kPublishedBaselinesJson));
}

inline BaselineTable load_published_baselines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read baselines file: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("baselines file is not valid JSON: " + path);
    return parse_published_baselines(j);
}

}  // namespace triage
