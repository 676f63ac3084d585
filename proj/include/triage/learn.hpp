#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/errors.hpp"
#include "triage/ranker.hpp"

namespace triage {

// ---- Feature extraction ----

// Lowercased alphanumeric runs; the feature-side tokenizer (distinct from
// the prompt token proxy).
inline std::vector<std::string> feature_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

struct Vocabulary {
    std::unordered_map<std::string, std::uint32_t> index;  // token -> dense id
    std::vector<std::string> tokens;                       // id -> token
    std::vector<std::uint32_t> doc_freq;                   // id -> train docs containing token
    std::size_t document_count = 0;
    std::uint32_t min_frequency = 2;
    std::string built_from;  // provenance tag of the training split

    std::size_t size() const { return tokens.size(); }
};

// Built from training text only; tokens below min_frequency total
// occurrences are dropped. Indices follow first appearance for determinism.
inline Vocabulary build_vocabulary(const std::vector<IssueReport>& train_reports,
                                   std::uint32_t min_frequency) {
    if (train_reports.empty()) throw DataError("cannot build vocabulary from empty split");
    std::unordered_map<std::string, std::uint32_t> totals;
    std::unordered_map<std::string, std::uint32_t> doc_freq;
    std::vector<std::string> first_seen;
    for (const auto& report : train_reports) {
        auto toks = feature_tokens(report.issue_text());
        std::unordered_set<std::string> in_doc;
        for (auto& t : toks) {
            auto [it, inserted] = totals.emplace(t, 0);
            if (inserted) first_seen.push_back(t);
            ++it->second;
            in_doc.insert(t);
        }
        for (const auto& t : in_doc) ++doc_freq[t];
    }

    Vocabulary vocab;
    vocab.min_frequency = min_frequency;
    vocab.document_count = train_reports.size();
    for (const auto& t : first_seen) {
        if (totals[t] >= min_frequency) {
            vocab.index.emplace(t, static_cast<std::uint32_t>(vocab.tokens.size()));
            vocab.tokens.push_back(t);
            vocab.doc_freq.push_back(doc_freq[t]);
        }
    }
    if (vocab.tokens.empty())
        throw DataError("vocabulary empty after min-frequency filter " +
                        std::to_string(min_frequency));
    return vocab;
}

enum class FeatureMode { count, tfidf };

inline std::string to_string(FeatureMode m) { return m == FeatureMode::count ? "count" : "tfidf"; }

inline FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "count") return FeatureMode::count;
    if (s == "tfidf") return FeatureMode::tfidf;
    throw UsageError("unknown feature mode: " + s);
}

// Sparse (index, value) pairs with strictly increasing indices.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    FeatureMode mode = FeatureMode::count;

    bool empty() const { return entries.empty(); }
};

inline FeatureVector featurize(const IssueReport& report, const Vocabulary& vocab,
                               FeatureMode mode, std::size_t max_tokens = 2048) {
    auto toks = feature_tokens(report.issue_text());
    if (toks.size() > max_tokens) toks.resize(max_tokens);

    std::unordered_map<std::uint32_t, double> counts;
    for (const auto& t : toks) {
        auto it = vocab.index.find(t);
        if (it != vocab.index.end()) counts[it->second] += 1.0;
    }

    FeatureVector fv;
    fv.mode = mode;
    fv.entries.assign(counts.begin(), counts.end());
    std::sort(fv.entries.begin(), fv.entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    if (mode == FeatureMode::tfidf) {
        double norm_sq = 0.0;
        for (auto& [idx, value] : fv.entries) {
            double idf = std::log(static_cast<double>(vocab.document_count) /
                                  static_cast<double>(vocab.doc_freq[idx]));
            value *= idf;
            norm_sq += value * value;
        }
        if (norm_sq <= 0.0) return FeatureVector{{}, mode};
        double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [idx, value] : fv.entries) value *= inv;
        std::erase_if(fv.entries, [](const auto& e) { return e.second == 0.0; });
    }
    return fv;
}

// ---- Model ----

// Linear decision function over the candidate classes: logits = W x + b.
struct LinearModel {
    std::size_t classes = 0;
    std::size_t features = 0;
    std::vector<double> weights;  // row-major classes x features
    std::vector<double> bias;

    static LinearModel zeros(std::size_t classes, std::size_t features) {
        LinearModel m;
        m.classes = classes;
        m.features = features;
        m.weights.assign(classes * features, 0.0);
        m.bias.assign(classes, 0.0);
        return m;
    }

    double& weight(std::size_t c, std::size_t f) { return weights[c * features + f]; }
    double weight(std::size_t c, std::size_t f) const { return weights[c * features + f]; }
};

struct Gradient {
    std::vector<double> weights;
    std::vector<double> bias;

    static Gradient zeros_like(const LinearModel& m) {
        Gradient g;
        g.weights.assign(m.weights.size(), 0.0);
        g.bias.assign(m.bias.size(), 0.0);
        return g;
    }

    void zero() {
        std::fill(weights.begin(), weights.end(), 0.0);
        std::fill(bias.begin(), bias.end(), 0.0);
    }

    void scale(double s) {
        for (auto& w : weights) w *= s;
        for (auto& b : bias) b *= s;
    }
};

inline std::vector<double> logits_of(const LinearModel& model, const FeatureVector& x) {
    std::vector<double> z(model.bias);
    for (const auto& [idx, value] : x.entries) {
        if (idx >= model.features) throw DataError("feature index out of range");
        if (!std::isfinite(value)) throw DataError("non-finite feature value");
        for (std::size_t c = 0; c < model.classes; ++c) z[c] += model.weight(c, idx) * value;
    }
    return z;
}

// Max-subtraction stabilized softmax.
inline std::vector<double> softmax_probabilities(const LinearModel& model, const FeatureVector& x) {
    auto z = logits_of(model, x);
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
}

// Adds loss gradient for one example into `acc`; returns the loss.
// grad_W = (p - onehot(label)) (x) x, grad_b = p - onehot(label).
inline double softmax_cross_entropy_accumulate(const LinearModel& model, const FeatureVector& x,
                                               std::size_t label, Gradient& acc) {
    if (label >= model.classes) throw DataError("label outside class range");
    auto z = logits_of(model, x);
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    double log_sum_exp = mx + std::log(sum);
    double loss = log_sum_exp - z[label];
    if (!std::isfinite(loss)) throw DataError("non-finite loss");

    for (std::size_t c = 0; c < model.classes; ++c) {
        double p = std::exp(z[c] - log_sum_exp);
        double g = p - (c == label ? 1.0 : 0.0);
        acc.bias[c] += g;
        for (const auto& [idx, value] : x.entries) acc.weights[c * model.features + idx] += g * value;
    }
    return loss;
}

struct LossGrad {
    double loss = 0.0;
    Gradient grad;
};

inline LossGrad softmax_cross_entropy(const LinearModel& model, const FeatureVector& x,
                                      std::size_t label) {
    LossGrad out;
    out.grad = Gradient::zeros_like(model);
    out.loss = softmax_cross_entropy_accumulate(model, x, label, out.grad);
    return out;
}

// One-vs-rest logistic loss over the same linear model: each class row is
// an independent binary classifier with target 1{c == label}. Realizes the
// CBR-style bag-of-words classifier at desk scale.
inline double ovr_logistic_accumulate(const LinearModel& model, const FeatureVector& x,
                                      std::size_t label, Gradient& acc) {
    if (label >= model.classes) throw DataError("label outside class range");
    auto z = logits_of(model, x);
    double loss = 0.0;
    for (std::size_t c = 0; c < model.classes; ++c) {
        double y = c == label ? 1.0 : 0.0;
        // softplus(z) - y*z, computed stably on both tails
        double softplus = z[c] > 0 ? z[c] + std::log1p(std::exp(-z[c]))
                                   : std::log1p(std::exp(z[c]));
        loss += softplus - y * z[c];
        double sigma = 1.0 / (1.0 + std::exp(-z[c]));
        double g = sigma - y;
        acc.bias[c] += g;
        for (const auto& [idx, value] : x.entries) acc.weights[c * model.features + idx] += g * value;
    }
    if (!std::isfinite(loss)) throw DataError("non-finite loss");
    return loss;
}

inline LossGrad ovr_logistic(const LinearModel& model, const FeatureVector& x, std::size_t label) {
    LossGrad out;
    out.grad = Gradient::zeros_like(model);
    out.loss = ovr_logistic_accumulate(model, x, label, out.grad);
    return out;
}

// ---- Optimizer ----

// Fine-tuning recipe defaults: decoupled weight decay 0.01, 3% linear
// warmup, accumulation over 4 micro-batches, 3 epochs, seed 3407.
struct TrainingConfig {
    double learning_rate = 2e-5;
    double weight_decay = 0.01;
    double warmup_fraction = 0.03;
    int grad_accumulation_steps = 4;
    int epochs = 3;
    std::uint64_t seed = 3407;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t max_features_tokens = 2048;

    void validate() const {
        if (learning_rate <= 0 || weight_decay < 0 || grad_accumulation_steps < 1 || epochs < 1 ||
            beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || epsilon <= 0 ||
            warmup_fraction < 0 || warmup_fraction >= 1 || max_features_tokens == 0)
            throw UsageError("invalid training configuration");
    }
};

struct AdamWState {
    std::vector<double> m_weights, v_weights, m_bias, v_bias;
    std::int64_t step = 0;  // completed optimizer steps

    static AdamWState zeros_like(const LinearModel& m) {
        AdamWState s;
        s.m_weights.assign(m.weights.size(), 0.0);
        s.v_weights.assign(m.weights.size(), 0.0);
        s.m_bias.assign(m.bias.size(), 0.0);
        s.v_bias.assign(m.bias.size(), 0.0);
        return s;
    }
};

// Linear warmup to the base rate, constant afterwards.
// warmup_steps = ceil(warmup_fraction * total_steps).
inline double lr_schedule(std::int64_t global_step, std::int64_t total_steps,
                          const TrainingConfig& config) {
    if (total_steps < 1) throw UsageError("lr_schedule requires total_steps >= 1");
    auto warmup_steps = static_cast<std::int64_t>(
        std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
    if (warmup_steps > 0 && global_step < warmup_steps)
        return config.learning_rate * static_cast<double>(global_step) /
               static_cast<double>(warmup_steps);
    return config.learning_rate;
}

// One decoupled-weight-decay adaptive-moment update:
// theta -= lr * ( m_hat / (sqrt(v_hat) + eps) + weight_decay * theta ).
// `grad` must already be averaged over the accumulated micro-batches and
// `lr` already scheduled.
inline void optimizer_step(LinearModel& model, const Gradient& grad, AdamWState& state,
                           const TrainingConfig& config, double lr) {
    if (grad.weights.size() != model.weights.size() || grad.bias.size() != model.bias.size())
        throw DataError("gradient shape does not match model");
    for (double g : grad.weights)
        if (!std::isfinite(g)) throw DataError("non-finite weight gradient; aborting update");
    for (double g : grad.bias)
        if (!std::isfinite(g)) throw DataError("non-finite bias gradient; aborting update");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + config.epsilon) +
                              config.weight_decay * theta[i]);
        }
    };
    update(model.weights, grad.weights, state.m_weights, state.v_weights);
    update(model.bias, grad.bias, state.m_bias, state.v_bias);
}

// ---- Training ----

struct StepRecord {
    std::int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct EpochSummary {
    int epoch = 0;
    double mean_train_loss = 0.0;
    double mean_val_loss = 0.0;
};

// softmax = the SFT analog (one shared distribution over candidates);
// one_vs_rest = the CBR-style bank of independent binary classifiers.
enum class Objective { softmax, one_vs_rest };

inline std::string to_string(Objective o) {
    return o == Objective::softmax ? "softmax" : "ovr";
}

inline Objective objective_from_string(const std::string& s) {
    if (s == "softmax") return Objective::softmax;
    if (s == "ovr" || s == "one-vs-rest") return Objective::one_vs_rest;
    throw UsageError("unknown training objective: " + s);
}

// Trained ranker bundle: the linear classifier plus everything needed to
// featurize and map classes back to developers.
struct SftModel {
    LinearModel linear;
    Vocabulary vocab;
    FeatureMode mode = FeatureMode::count;
    Objective objective = Objective::softmax;
    std::vector<std::string> class_keys;  // class index -> candidate raw id
    std::size_t max_features_tokens = 2048;
};

struct TrainOptions {
    FeatureMode mode = FeatureMode::count;
    Objective objective = Objective::softmax;
    std::uint32_t min_frequency = 2;
    std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
    std::string split_tag;       // provenance recorded in the vocabulary
};

struct TrainResult {
    SftModel model;
    std::vector<StepRecord> history;
    std::vector<EpochSummary> epochs;
};

namespace detail {

inline void deterministic_shuffle_indices(std::vector<std::size_t>& values, std::uint64_t& state) {
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

inline void save_checkpoint(const SftModel& model, const TrainingConfig& config,
                            const std::filesystem::path& path);

// Full-pass epochs with micro-batches of 1 accumulated over
// grad_accumulation_steps (effective batch 4 at the defaults), shuffling
// seeded from config.seed. Deterministic: identical inputs give identical
// weights and loss history.
inline TrainResult train(const std::vector<IssueReport>& train_split,
                         const std::vector<IssueReport>& val_split,
                         const CandidateSet& candidates, const TrainingConfig& config,
                         const TrainOptions& options = {}) {
    config.validate();
    if (train_split.empty()) throw DataError("empty training split");

    TrainResult result;
    result.model.vocab = build_vocabulary(train_split, options.min_frequency);
    result.model.vocab.built_from = options.split_tag;
    result.model.mode = options.mode;
    result.model.objective = options.objective;
    result.model.max_features_tokens = config.max_features_tokens;
    for (const auto& member : candidates.members) result.model.class_keys.push_back(member.raw);

    const std::size_t classes = candidates.size();
    std::vector<FeatureVector> features;
    std::vector<std::size_t> labels;
    features.reserve(train_split.size());
    for (const auto& report : train_split) {
        auto idx = candidates.index_of(report.assignee.key);
        if (!idx)
            throw DataError("training label outside candidate set: " + report.assignee.raw);
        labels.push_back(*idx);
        features.push_back(
            featurize(report, result.model.vocab, options.mode, config.max_features_tokens));
    }
    std::vector<FeatureVector> val_features;
    std::vector<std::size_t> val_labels;
    for (const auto& report : val_split) {
        auto idx = candidates.index_of(report.assignee.key);
        if (!idx)
            throw DataError("validation label outside candidate set: " + report.assignee.raw);
        val_labels.push_back(*idx);
        val_features.push_back(
            featurize(report, result.model.vocab, options.mode, config.max_features_tokens));
    }

    auto& model = result.model.linear;
    model = LinearModel::zeros(classes, result.model.vocab.size());
    AdamWState state = AdamWState::zeros_like(model);
    Gradient grad = Gradient::zeros_like(model);

    const std::size_t n = train_split.size();
    const auto accum = static_cast<std::size_t>(config.grad_accumulation_steps);
    const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + accum - 1) / accum);
    const std::int64_t total_steps = steps_per_epoch * config.epochs;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t rng_state = config.seed ? config.seed : 0x9e3779b97f4a7c15ULL;

    auto loss_accumulate = [&](const FeatureVector& x, std::size_t label, Gradient& g) {
        return options.objective == Objective::softmax
                   ? softmax_cross_entropy_accumulate(model, x, label, g)
                   : ovr_logistic_accumulate(model, x, label, g);
    };

    std::int64_t global_step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        detail::deterministic_shuffle_indices(order, rng_state);
        double epoch_loss_sum = 0.0;
        std::int64_t epoch_steps = 0;
        for (std::size_t start = 0; start < n; start += accum) {
            grad.zero();
            std::size_t batch = std::min(accum, n - start);
            double loss_sum = 0.0;
            for (std::size_t j = 0; j < batch; ++j) {
                std::size_t idx = order[start + j];
                loss_sum += loss_accumulate(features[idx], labels[idx], grad);
            }
            grad.scale(1.0 / static_cast<double>(batch));
            double mean_loss = loss_sum / static_cast<double>(batch);
            double lr = lr_schedule(global_step, total_steps, config);
            optimizer_step(model, grad, state, config, lr);
            result.history.push_back({global_step, lr, mean_loss});
            epoch_loss_sum += mean_loss;
            ++epoch_steps;
            ++global_step;
        }

        EpochSummary summary;
        summary.epoch = epoch;
        summary.mean_train_loss = epoch_steps ? epoch_loss_sum / static_cast<double>(epoch_steps) : 0.0;
        if (!val_features.empty()) {
            Gradient scratch = Gradient::zeros_like(model);
            double val_sum = 0.0;
            for (std::size_t i = 0; i < val_features.size(); ++i) {
                scratch.zero();
                val_sum += loss_accumulate(val_features[i], val_labels[i], scratch);
            }
            summary.mean_val_loss = val_sum / static_cast<double>(val_features.size());
        }
        result.epochs.push_back(summary);

        if (!options.checkpoint_dir.empty()) {
            std::filesystem::create_directories(options.checkpoint_dir);
            save_checkpoint(result.model, config,
                            std::filesystem::path(options.checkpoint_dir) /
                                ("checkpoint_epoch" + std::to_string(epoch) + ".bin"));
        }
    }
    return result;
}

// Classes by descending logit, ties by key; top min(k, classes, 10).
inline Ranking model_rank(const SftModel& model, const IssueReport& report,
                          const CandidateSet& candidates, int k) {
    if (k < 1) throw UsageError("rank cutoff k must be >= 1");
    if (model.linear.classes != candidates.size())
        throw DataError("model classes do not match candidate set");
    auto x = featurize(report, model.vocab, model.mode, model.max_features_tokens);
    auto z = logits_of(model.linear, x);

    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (z[a] != z[b]) return z[a] > z[b];
        return candidates.members[a].key < candidates.members[b].key;
    });

    Ranking ranking;
    ranking.issue_id = report.id;
    ranking.source = model.objective == Objective::softmax ? "sft" : "cbr";
    std::size_t count = std::min({static_cast<std::size_t>(k), Ranking::kMaxItems, order.size()});
    for (std::size_t i = 0; i < count; ++i) ranking.items.push_back(candidates.members[order[i]]);
    return ranking;
}

class SftRanker : public Assigner {
public:
    explicit SftRanker(SftModel model) : model_(std::move(model)) {}

    std::string name() const override {
        return model_.objective == Objective::softmax ? "sft" : "cbr";
    }

    Ranking rank(const IssueReport& report, const CandidateSet& candidates, int k) const override {
        return model_rank(model_, report, candidates, k);
    }

    const SftModel& model() const { return model_; }

private:
    SftModel model_;
};

// ---- Checkpoint format ----
// Versioned little-endian binary: magic, dims, row-major weights, bias,
// class keys, vocabulary (+ df) and featurization settings. A JSON sidecar
// (<path>.json) records the training config.

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

inline double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    auto len = read_u64(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'T', 'B', 'C', 'K'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

inline void save_checkpoint(const SftModel& model, const TrainingConfig& config,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 4);
    detail::write_u64(out, kCheckpointVersion);
    detail::write_u64(out, model.linear.classes);
    detail::write_u64(out, model.linear.features);
    for (double w : model.linear.weights) detail::write_f64(out, w);
    for (double b : model.linear.bias) detail::write_f64(out, b);
    detail::write_u64(out, model.class_keys.size());
    for (const auto& key : model.class_keys) detail::write_string(out, key);
    detail::write_u64(out, model.vocab.tokens.size());
    for (std::size_t i = 0; i < model.vocab.tokens.size(); ++i) {
        detail::write_string(out, model.vocab.tokens[i]);
        detail::write_u64(out, model.vocab.doc_freq[i]);
    }
    detail::write_u64(out, model.vocab.document_count);
    detail::write_u64(out, model.vocab.min_frequency);
    detail::write_string(out, model.vocab.built_from);
    detail::write_u64(out, model.mode == FeatureMode::count ? 0 : 1);
    detail::write_u64(out, model.objective == Objective::softmax ? 0 : 1);
    detail::write_u64(out, model.max_features_tokens);
    if (!out) throw DataError("checkpoint write failed: " + path.string());

    nlohmann::ordered_json sidecar;
    sidecar["learning_rate"] = config.learning_rate;
    sidecar["weight_decay"] = config.weight_decay;
    sidecar["warmup_fraction"] = config.warmup_fraction;
    sidecar["grad_accumulation_steps"] = config.grad_accumulation_steps;
    sidecar["epochs"] = config.epochs;
    sidecar["seed"] = config.seed;
    sidecar["beta1"] = config.beta1;
    sidecar["beta2"] = config.beta2;
    sidecar["epsilon"] = config.epsilon;
    sidecar["max_features_tokens"] = config.max_features_tokens;
    sidecar["classes"] = model.linear.classes;
    sidecar["features"] = model.linear.features;
    sidecar["feature_mode"] = to_string(model.mode);
    sidecar["objective"] = to_string(model.objective);
    sidecar["built_from"] = model.vocab.built_from;
    std::ofstream side(path.string() + ".json", std::ios::binary);
    if (!side) throw DataError("cannot write checkpoint sidecar: " + path.string() + ".json");
    side << sidecar.dump(2) << '\n';
}

inline SftModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path.string());
    if (detail::read_u64(in) != kCheckpointVersion)
        throw DataError("unsupported checkpoint version in " + path.string());

    SftModel model;
    std::size_t classes = detail::read_u64(in);
    std::size_t features = detail::read_u64(in);
    model.linear = LinearModel::zeros(classes, features);
    for (auto& w : model.linear.weights) w = detail::read_f64(in);
    for (auto& b : model.linear.bias) b = detail::read_f64(in);
    auto class_count = detail::read_u64(in);
    for (std::uint64_t i = 0; i < class_count; ++i)
        model.class_keys.push_back(detail::read_string(in));
    auto vocab_count = detail::read_u64(in);
    for (std::uint64_t i = 0; i < vocab_count; ++i) {
        std::string token = detail::read_string(in);
        auto df = static_cast<std::uint32_t>(detail::read_u64(in));
        model.vocab.index.emplace(token, static_cast<std::uint32_t>(model.vocab.tokens.size()));
        model.vocab.tokens.push_back(std::move(token));
        model.vocab.doc_freq.push_back(df);
    }
    model.vocab.document_count = detail::read_u64(in);
    model.vocab.min_frequency = static_cast<std::uint32_t>(detail::read_u64(in));
    model.vocab.built_from = detail::read_string(in);
    model.mode = detail::read_u64(in) == 0 ? FeatureMode::count : FeatureMode::tfidf;
    model.objective = detail::read_u64(in) == 0 ? Objective::softmax : Objective::one_vs_rest;
    model.max_features_tokens = detail::read_u64(in);
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    return model;
}

// Loss history as CSV: step,lr,loss.
inline void write_history_csv(const std::vector<StepRecord>& history,
                              const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write loss history: " + path.string());
    out << "step,lr,loss\n";
    char buf[96];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n", static_cast<long long>(rec.step),
                      rec.lr, rec.loss);
        out << buf;
    }
}

}  // namespace triage
