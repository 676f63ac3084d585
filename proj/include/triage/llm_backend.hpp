#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"
#include "triage/promptgen.hpp"
#include "triage/ranker.hpp"

namespace triage {

// Completion-style HTTP endpoint client. Temperature is pinned to 0 — the
// portable approximation of greedy decoding.
struct BackendConfig {
    std::string endpoint_url = "http://127.0.0.1:8080/v1/completions";
    std::string model_name = "triage-model";
    int max_new_tokens = 256;
    double temperature = 0.0;
    double timeout_seconds = 30.0;
    int max_retries = 2;
    int max_in_flight = 4;
    double abort_failure_fraction = 0.25;
    int retry_backoff_ms = 250;

    void validate() const {
        if (temperature != 0.0)
            throw UsageError("temperature must be 0 (greedy decoding contract)");
        if (max_in_flight < 1 || max_retries < 0 || max_new_tokens < 1 || timeout_seconds <= 0 ||
            abort_failure_fraction < 0 || abort_failure_fraction > 1 || retry_backoff_ms < 0)
            throw UsageError("invalid backend configuration");
    }

    // TRIAGE_BACKEND_URL overrides the configured endpoint.
    std::string resolved_endpoint() const {
        const char* env = std::getenv("TRIAGE_BACKEND_URL");
        return env && *env ? std::string(env) : endpoint_url;
    }
};

struct CompletionRecord {
    std::string issue_id;
    std::string prompt;
    std::optional<std::string> raw_output;  // present iff the attempt succeeded
    std::int64_t latency_ms = 0;
    int attempt_count = 0;
    int run_index = 0;
    bool ok = false;
    std::string error;
};

namespace detail {

struct UrlParts {
    std::string host;
    int port = 80;
    std::string path = "/";
};

inline UrlParts parse_http_url(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0)
        throw UsageError("backend endpoint must be an http:// URL: " + url);
    UrlParts parts;
    std::string rest = url.substr(scheme.size());
    auto slash = rest.find('/');
    std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    parts.path = slash == std::string::npos ? "/" : rest.substr(slash);
    auto colon = authority.find(':');
    if (colon == std::string::npos) {
        parts.host = authority;
    } else {
        parts.host = authority.substr(0, colon);
        try {
            parts.port = std::stoi(authority.substr(colon + 1));
        } catch (const std::exception&) {
            throw UsageError("invalid port in endpoint URL: " + url);
        }
    }
    if (parts.host.empty()) throw UsageError("endpoint URL missing host: " + url);
    return parts;
}

}  // namespace detail

struct CompleteOutcome {
    std::string text;
    int attempts = 0;
    std::int64_t latency_ms = 0;
};

// Single completion request. Transport failures and 5xx responses retry
// with exponential backoff up to max_retries; other statuses and malformed
// bodies are protocol errors.
inline CompleteOutcome complete_with_stats(const std::string& prompt, const BackendConfig& config) {
    config.validate();
    auto parts = detail::parse_http_url(config.resolved_endpoint());

    nlohmann::ordered_json body;
    body["model"] = config.model_name;
    body["prompt"] = prompt;
    body["max_tokens"] = config.max_new_tokens;
    body["temperature"] = config.temperature;
    const std::string payload = body.dump();

    std::string last_error;
    const auto start = std::chrono::steady_clock::now();
    for (int attempt = 1; attempt <= config.max_retries + 1; ++attempt) {
        if (attempt > 1) {
            auto backoff = std::chrono::milliseconds(
                static_cast<std::int64_t>(config.retry_backoff_ms) << (attempt - 2));
            std::this_thread::sleep_for(backoff);
        }
        httplib::Client client(parts.host, parts.port);
        auto secs = static_cast<time_t>(config.timeout_seconds);
        auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        auto res = client.Post(parts.path, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error: HTTP " + std::to_string(res->status);
            continue;
        }
        auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        if (res->status != 200)
            throw ProtocolError("unexpected HTTP status " + std::to_string(res->status));
        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
            reply["choices"].empty() || !reply["choices"][0].contains("text") ||
            !reply["choices"][0]["text"].is_string())
            throw ProtocolError("malformed completion response body");
        return CompleteOutcome{reply["choices"][0]["text"].get<std::string>(), attempt,
                               static_cast<std::int64_t>(latency)};
    }
    throw BackendError("backend unavailable after " + std::to_string(config.max_retries + 1) +
                       " attempts (" + last_error + ")");
}

inline std::string complete(const std::string& prompt, const BackendConfig& config) {
    return complete_with_stats(prompt, config).text;
}

// render -> complete -> constrained parse; the closed-world guarantee comes
// from parse_ranked_output. Unparseable-but-delivered output yields an
// empty Ranking, never an error.
inline Ranking llm_rank(const IssueReport& report, const CandidateSet& candidates, int k,
                        const BackendConfig& config, const PromptTemplate& tmpl, int run_index = 0,
                        CompletionRecord* record_out = nullptr) {
    if (k < 1) throw UsageError("rank cutoff k must be >= 1");
    CompletionRecord record;
    record.issue_id = report.id;
    record.run_index = run_index;
    record.prompt = render_eval_prompt(report, tmpl);
    try {
        auto outcome = complete_with_stats(record.prompt, config);
        record.ok = true;
        record.raw_output = outcome.text;
        record.attempt_count = outcome.attempts;
        record.latency_ms = outcome.latency_ms;
    } catch (const BackendError& e) {
        record.ok = false;
        record.attempt_count = config.max_retries + 1;
        record.error = e.what();
        if (record_out) *record_out = record;
        throw BackendError("issue " + report.id + ": " + e.what());
    }
    if (record_out) *record_out = record;

    Ranking ranking = parse_ranked_output(*record.raw_output, candidates);
    ranking.issue_id = report.id;
    ranking.source = "llm:" + config.model_name;
    if (ranking.items.size() > static_cast<std::size_t>(k))
        ranking.items.resize(static_cast<std::size_t>(k));
    return ranking;
}

// ---- Completion archives ----

inline void write_completion_records(const std::vector<CompletionRecord>& records,
                                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write completions: " + path.string());
    for (const auto& rec : records) {
        nlohmann::ordered_json j;
        j["issue_id"] = rec.issue_id;
        j["prompt"] = rec.prompt;
        if (rec.raw_output)
            j["raw_output"] = *rec.raw_output;
        else
            j["raw_output"] = nullptr;
        j["latency_ms"] = rec.latency_ms;
        j["attempt_count"] = rec.attempt_count;
        j["run_index"] = rec.run_index;
        j["ok"] = rec.ok;
        if (!rec.ok) j["error"] = rec.error;
        out << j.dump() << '\n';
    }
}

inline std::vector<CompletionRecord> load_completion_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read completions: " + path.string());
    std::vector<CompletionRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("malformed completion record in " + path.string());
        CompletionRecord rec;
        rec.issue_id = j.at("issue_id").get<std::string>();
        rec.prompt = j.at("prompt").get<std::string>();
        if (!j.at("raw_output").is_null()) rec.raw_output = j["raw_output"].get<std::string>();
        rec.latency_ms = j.at("latency_ms").get<std::int64_t>();
        rec.attempt_count = j.at("attempt_count").get<int>();
        rec.run_index = j.at("run_index").get<int>();
        rec.ok = j.at("ok").get<bool>();
        if (j.contains("error")) rec.error = j["error"].get<std::string>();
        records.push_back(std::move(rec));
    }
    return records;
}

// Re-derives Rankings from archived raw completions; evaluation is
// re-runnable offline from the archive alone.
inline std::vector<Ranking> replay_rankings(const std::vector<CompletionRecord>& records,
                                            const CandidateSet& candidates, int k,
                                            const std::string& source) {
    std::vector<Ranking> rankings;
    for (const auto& rec : records) {
        if (!rec.ok) continue;
        Ranking r = parse_ranked_output(*rec.raw_output, candidates);
        r.issue_id = rec.issue_id;
        r.source = source;
        if (r.items.size() > static_cast<std::size_t>(k)) r.items.resize(static_cast<std::size_t>(k));
        rankings.push_back(std::move(r));
    }
    return rankings;
}

// ---- Batched evaluation ----

struct BatchRun {
    std::vector<Ranking> rankings;           // issue order, failures ranked empty
    std::vector<CompletionRecord> records;   // issue order
    std::size_t failures = 0;
};

// Queries every test issue once per run with at most max_in_flight requests
// outstanding. Records are archived (when archive_root is set) before the
// failure-fraction abort check so partial results survive an abort.
inline std::vector<BatchRun> batch_evaluate(const std::vector<IssueReport>& test_split,
                                            const CandidateSet& candidates, int k,
                                            const BackendConfig& config, int runs,
                                            const PromptTemplate& tmpl,
                                            const std::filesystem::path& archive_root = {}) {
    if (runs < 1) throw UsageError("batch_evaluate requires runs >= 1");
    if (test_split.empty()) throw DataError("empty test split");
    if (tmpl.kind != PromptKind::eval)
        throw UsageError("batch_evaluate requires an eval template");
    config.validate();
    detail::parse_http_url(config.resolved_endpoint());  // fail fast on bad URLs

    std::vector<BatchRun> output;
    for (int run = 0; run < runs; ++run) {
        const std::size_t n = test_split.size();
        BatchRun result;
        result.rankings.resize(n);
        result.records.resize(n);

        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> failures{0};
        auto worker = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                CompletionRecord record;
                try {
                    Ranking r = llm_rank(test_split[i], candidates, k, config, tmpl, run, &record);
                    result.rankings[i] = std::move(r);
                } catch (const std::exception& e) {
                    // must not escape the worker thread; recorded as a failure
                    failures.fetch_add(1);
                    result.rankings[i].issue_id = test_split[i].id;
                    result.rankings[i].source = "llm:" + config.model_name;
                    if (record.error.empty()) {
                        record.issue_id = test_split[i].id;
                        record.run_index = run;
                        record.error = e.what();
                    }
                }
                result.records[i] = std::move(record);
            }
        };

        std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), n);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        result.failures = failures.load();
        if (!archive_root.empty()) {
            auto run_dir = archive_root / ("run_" + std::to_string(run));
            std::filesystem::create_directories(run_dir);
            write_completion_records(result.records, run_dir / "completions.jsonl");
        }
        double fraction = static_cast<double>(result.failures) / static_cast<double>(n);
        if (fraction > config.abort_failure_fraction)
            throw BackendError("run " + std::to_string(run) + " aborted: " +
                               std::to_string(result.failures) + "/" + std::to_string(n) +
                               " requests failed (partial results saved)");
        output.push_back(std::move(result));
    }
    return output;
}

// Assigner adapter over the remote backend; one request per rank() call.
class LlmRanker : public Assigner {
public:
    LlmRanker(BackendConfig config, PromptTemplate tmpl)
        : config_(std::move(config)), tmpl_(std::move(tmpl)) {}

    std::string name() const override { return "llm:" + config_.model_name; }

    Ranking rank(const IssueReport& report, const CandidateSet& candidates, int k) const override {
        return llm_rank(report, candidates, k, config_, tmpl_);
    }

private:
    BackendConfig config_;
    PromptTemplate tmpl_;
};

}  // namespace triage
