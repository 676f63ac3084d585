#pragma once

#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"

namespace triage {

inline constexpr std::string_view kTrainInstruction =
    "Below is a GitHub issue. Suggest the single best developer identifier to resolve it. "
    "Only return the identifier.";

inline constexpr std::string_view kEvalInstruction =
    "Below is a GitHub issue. List the TOP 10 developers to handle the issue, ranked from best "
    "to worst. Use only developer identifiers known in this project. Return EXACTLY 10 "
    "comma-separated items, unique, with no extra text.";

inline constexpr std::string_view kTrainTrailer = "Assignee:";
inline constexpr std::string_view kEvalTrailer = "Top 10 assignees:";

// Proxy token count: maximal runs of non-whitespace. Stands in for the
// model tokenizer; the truncation semantics are what downstream logic
// depends on, not the exact boundary.
inline std::size_t count_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

using TokenCounter = std::function<std::size_t(std::string_view)>;

enum class PromptKind { train, eval };

struct PromptTemplate {
    PromptKind kind = PromptKind::train;
    std::string instruction;
    std::size_t budget_tokens = 2048;
    TokenCounter counter = count_tokens;

    static PromptTemplate training(std::size_t budget = 2048, TokenCounter counter = count_tokens) {
        return make(PromptKind::train, std::string(kTrainInstruction), budget, std::move(counter));
    }

    static PromptTemplate evaluation(std::size_t budget = 2048,
                                     TokenCounter counter = count_tokens) {
        return make(PromptKind::eval, std::string(kEvalInstruction), budget, std::move(counter));
    }

    std::string_view trailer() const {
        return kind == PromptKind::train ? kTrainTrailer : kEvalTrailer;
    }

private:
    static PromptTemplate make(PromptKind kind, std::string instruction, std::size_t budget,
                               TokenCounter counter) {
        PromptTemplate t{kind, std::move(instruction), budget, std::move(counter)};
        // Room for the assignee line on top of the instruction.
        if (t.budget_tokens < t.counter(t.instruction) + 8)
            throw UsageError("prompt budget too small for instruction");
        return t;
    }
};

// Longest byte prefix of `issue_text` containing at most `allowed_tokens`
// whole proxy tokens; the cut lands at the end of the last kept token.
inline std::string truncate_issue_text(std::string_view issue_text, std::size_t allowed_tokens) {
    if (allowed_tokens == 0) return "";
    std::size_t count = 0;
    std::size_t last_token_end = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < issue_text.size(); ++i) {
        bool space = std::isspace(static_cast<unsigned char>(issue_text[i]));
        if (!space && !in_token) {
            in_token = true;
            ++count;
        }
        if (!space) last_token_end = i + 1;
        if (space && in_token) {
            in_token = false;
            if (count == allowed_tokens) return std::string(issue_text.substr(0, last_token_end));
        }
    }
    return std::string(issue_text);
}

namespace detail {

inline std::string compose_prompt(const PromptTemplate& tmpl, std::string_view issue_text) {
    std::string prompt;
    prompt.reserve(tmpl.instruction.size() + issue_text.size() + tmpl.trailer().size() + 16);
    prompt += tmpl.instruction;
    prompt += "\nIssue: ";
    prompt += issue_text;
    prompt += "\n";
    prompt += tmpl.trailer();
    return prompt;
}

// Truncation removes tokens only from the end of the issue text; the
// instruction and trailer always survive verbatim.
inline std::string render_within_budget(const IssueReport& report, const PromptTemplate& tmpl) {
    const std::string body = report.issue_text();
    std::string prompt = compose_prompt(tmpl, body);
    if (tmpl.counter(prompt) <= tmpl.budget_tokens) return prompt;

    const std::size_t overhead = tmpl.counter(compose_prompt(tmpl, ""));
    std::size_t allowed = tmpl.budget_tokens > overhead ? tmpl.budget_tokens - overhead : 0;
    prompt = compose_prompt(tmpl, truncate_issue_text(body, allowed));
    // Non-default counters may not count prefixes additively; back off until
    // the budget holds.
    while (tmpl.counter(prompt) > tmpl.budget_tokens && allowed > 0) {
        --allowed;
        prompt = compose_prompt(tmpl, truncate_issue_text(body, allowed));
    }
    return prompt;
}

}  // namespace detail

// One supervision unit: prompt ending in "Assignee:", completion = the
// assignee's raw (original-case) identifier, EOS appended at tokenization.
struct TrainingExample {
    std::string prompt;
    std::string completion;
    bool eos_appended = true;

    friend bool operator==(const TrainingExample& a, const TrainingExample& b) {
        return a.prompt == b.prompt && a.completion == b.completion;
    }
};

inline TrainingExample render_training_example(const IssueReport& report,
                                               const PromptTemplate& tmpl) {
    if (tmpl.kind != PromptKind::train)
        throw UsageError("render_training_example requires a train template");
    TrainingExample ex;
    ex.prompt = detail::render_within_budget(report, tmpl);
    ex.completion = report.assignee.raw;
    ex.eos_appended = true;
    return ex;
}

inline std::string render_eval_prompt(const IssueReport& report, const PromptTemplate& tmpl) {
    if (tmpl.kind != PromptKind::eval)
        throw UsageError("render_eval_prompt requires an eval template");
    return detail::render_within_budget(report, tmpl);
}

// JSON-lines, one {"prompt", "completion"} object per report, order
// preserved. Returns the record count.
inline std::size_t emit_training_file(const std::vector<IssueReport>& split,
                                      const PromptTemplate& tmpl,
                                      const std::filesystem::path& path) {
    if (split.empty()) throw DataError("refusing to emit an empty training file");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write training file: " + path.string());
    for (const auto& report : split) {
        TrainingExample ex = render_training_example(report, tmpl);
        nlohmann::ordered_json j;
        j["prompt"] = ex.prompt;
        j["completion"] = ex.completion;
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
    return split.size();
}

inline std::vector<TrainingExample> load_training_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read training file: " + path.string());
    std::vector<TrainingExample> examples;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("prompt") || !j.contains("completion"))
            throw DataError("malformed training record in " + path.string());
        TrainingExample ex;
        ex.prompt = j["prompt"].get<std::string>();
        ex.completion = j["completion"].get<std::string>();
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace triage
