#pragma once

// Label-then-verify loop over SAE latents.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <functional>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "featscope/activation_store.hpp"
#include "featscope/error.hpp"
#include "featscope/sae.hpp"
#include "featscope/teacher.hpp"

namespace featscope {

class InsufficientExamples : public Error {
public:
    using Error::Error;
};

class EmptyLabel : public Error {
public:
    using Error::Error;
};

struct PoolSample {
    Index sample = 0;
    std::string sample_id;
    std::string text;
    float activation = 0.0f;  // 0 for non-firing samples
};

struct ExamplePools {
    Index neuron_id = 0;
    std::vector<PoolSample> label_pool;
    std::vector<PoolSample> verify_pos;
    std::vector<PoolSample> verify_neg;
};

struct AutoInterpConfig {
    std::size_t n_label = 10;
    std::size_t n_verify = 5;
    std::uint64_t seed = 0;
    double f1_threshold = 0.9;
    std::size_t threads = 1;

    void validate() const {
        if (n_label == 0 || n_verify == 0) throw ValidationError("n_label and n_verify must be positive");
        if (!(f1_threshold >= 0.0 && f1_threshold <= 1.0)) throw ValidationError("f1_threshold must lie in [0, 1]");
        if (threads == 0) throw ValidationError("threads must be positive");
    }
};

/// A neuron's firings ordered by activation (descending), ties by sample_id.
inline std::vector<Firing> rank_by_activation(const FiringProfile& profile, Index neuron) {
    auto ranked = profile.neurons.at(neuron);
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Firing& a, const Firing& b) {
        if (a.activation != b.activation) return a.activation > b.activation;
        return profile.sample_ids[a.sample] < profile.sample_ids[b.sample];
    });
    return ranked;
}

inline ExamplePools build_pools(const FiringProfile& profile, std::span<const SampleMeta> meta, Index neuron,
                                std::size_t n_label, std::size_t n_verify, std::uint64_t seed) {
    if (meta.size() != profile.n_samples())
        throw DimensionError("build_pools: metadata does not match the firing profile");
    if (neuron >= profile.latent_width()) throw ValidationError("neuron id out of range");
    const auto& fires = profile.neurons[neuron];
    if (fires.size() < n_label + n_verify)
        throw InsufficientExamples("neuron " + std::to_string(neuron) + " fires on " + std::to_string(fires.size()) +
                                   " samples, needs " + std::to_string(n_label + n_verify));
    if (profile.n_samples() - fires.size() < n_verify)
        throw InsufficientExamples("neuron " + std::to_string(neuron) + " has fewer than " +
                                   std::to_string(n_verify) + " non-firing samples");

    auto make = [&](Index i, float a) { return PoolSample{i, meta[i].sample_id, meta[i].text, a}; };
    ExamplePools pools;
    pools.neuron_id = neuron;
    const auto ranked = rank_by_activation(profile, neuron);
    for (std::size_t r = 0; r < n_label; ++r) pools.label_pool.push_back(make(ranked[r].sample, ranked[r].activation));

    std::vector<Firing> rest(ranked.begin() + static_cast<std::ptrdiff_t>(n_label), ranked.end());
    std::sort(rest.begin(), rest.end(), [](const Firing& a, const Firing& b) { return a.sample < b.sample; });
    std::vector<char> firing(profile.n_samples(), 0);
    for (const auto& f : fires) firing[f.sample] = 1;
    std::vector<Index> silent;
    for (Index i = 0; i < profile.n_samples(); ++i)
        if (!firing[i]) silent.push_back(i);

    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (neuron + 1)));
    std::vector<Firing> pos;
    std::sample(rest.begin(), rest.end(), std::back_inserter(pos), n_verify, rng);
    for (const auto& f : pos) pools.verify_pos.push_back(make(f.sample, f.activation));
    std::vector<Index> neg;
    std::sample(silent.begin(), silent.end(), std::back_inserter(neg), n_verify, rng);
    for (Index i : neg) pools.verify_neg.push_back(make(i, 0.0f));
    return pools;
}

// ---------------------------------------------------------------------------
// Prompts.

inline constexpr const char* kPromptVersion = "label-v1/verify-v1";

namespace detail {

inline std::string quote(const std::string& s) {
    return nlohmann::json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::string label_prompt(const ExamplePools& pools) {
    std::string p =
        "Each text snippet below strongly activates the same feature in a language model's hidden state.\n"
        "Name the concept the snippets share in a short phrase. Reply with the phrase only.\n\n";
    for (std::size_t i = 0; i < pools.label_pool.size(); ++i)
        p += std::to_string(i + 1) + ". " + detail::quote(pools.label_pool[i].text) + "\n";
    return p;
}

inline std::string verify_prompt(const std::string& label, const std::string& text) {
    return "A feature in a language model's hidden state carries the label:\n" + detail::quote(label) +
           "\nDoes this label apply to the text snippet below? Answer yes or no.\n\nSnippet: " + detail::quote(text) +
           "\n";
}

struct YesNo {
    bool yes = false;
    bool flagged = false;  // reply was neither yes nor no
};

/// Case-insensitive "yes"/"no" prefix, which must end at a non-letter. Anything else is "no", flagged.
inline YesNo parse_yes_no(const std::string& reply) {
    const auto t = detail::trim(reply);
    auto starts = [&](const char* word, std::size_t n) {
        if (t.size() < n) return false;
        for (std::size_t i = 0; i < n; ++i)
            if (std::tolower(static_cast<unsigned char>(t[i])) != word[i]) return false;
        return t.size() == n || !std::isalpha(static_cast<unsigned char>(t[n]));
    };
    if (starts("yes", 3)) return {true, false};
    if (starts("no", 2)) return {false, false};
    return {false, true};
}

inline std::string generate_label(Teacher& teacher, const ExamplePools& pools) {
    auto label = teacher.complete(label_prompt(pools));
    if (detail::trim(label).empty()) throw EmptyLabel("teacher returned an empty label for neuron " + std::to_string(pools.neuron_id));
    return label;
}

// ---------------------------------------------------------------------------
// Metrics and records.

struct ClassifierMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

inline ClassifierMetrics classifier_metrics(const std::vector<bool>& predictions, const std::vector<bool>& truth) {
    if (predictions.size() != truth.size())
        throw DimensionError("classifier_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(truth.size()) + " labels");
    if (predictions.empty()) throw ValidationError("classifier_metrics: no predictions");
    ClassifierMetrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predictions[i]) (truth[i] ? m.tp : m.fp)++;
        else (truth[i] ? m.fn : m.tn)++;
    }
    const auto total = static_cast<double>(truth.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / total;
    m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

enum class NeuronStatus { labeled, insufficient_examples, teacher_failure, empty_label };

inline const char* to_string(NeuronStatus s) {
    switch (s) {
        case NeuronStatus::labeled: return "labeled";
        case NeuronStatus::insufficient_examples: return "insufficient_examples";
        case NeuronStatus::teacher_failure: return "teacher_failure";
        case NeuronStatus::empty_label: return "empty_label";
    }
    return "unknown";
}

inline NeuronStatus status_from_string(const std::string& s) {
    for (auto st : {NeuronStatus::labeled, NeuronStatus::insufficient_examples, NeuronStatus::teacher_failure,
                    NeuronStatus::empty_label})
        if (s == to_string(st)) return st;
    throw FormatError("unknown neuron status '" + s + "'");
}

struct NeuronRecord {
    Index neuron_id = 0;
    NeuronStatus status = NeuronStatus::labeled;
    std::string label;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    // Verify samples in order V+ then V-.
    std::vector<std::string> sample_ids;
    std::vector<bool> predictions;
    std::vector<bool> truth;
    std::vector<bool> flagged;
    std::string error;

    bool labeled() const { return status == NeuronStatus::labeled; }
    bool operator==(const NeuronRecord&) const = default;
};

inline NeuronRecord verify_label(Teacher& teacher, const std::string& label, const ExamplePools& pools) {
    if (detail::trim(label).empty()) throw ValidationError("verify_label: empty label");
    NeuronRecord rec;
    rec.neuron_id = pools.neuron_id;
    rec.label = label;
    auto ask = [&](const PoolSample& s, bool truth) {
        const auto answer = parse_yes_no(teacher.complete(verify_prompt(label, s.text)));
        rec.sample_ids.push_back(s.sample_id);
        rec.predictions.push_back(answer.yes);
        rec.truth.push_back(truth);
        rec.flagged.push_back(answer.flagged);
    };
    for (const auto& s : pools.verify_pos) ask(s, true);
    for (const auto& s : pools.verify_neg) ask(s, false);
    const auto m = classifier_metrics(rec.predictions, rec.truth);
    rec.accuracy = m.accuracy;
    rec.precision = m.precision;
    rec.recall = m.recall;
    rec.f1 = m.f1;
    return rec;
}

/// Pools, labels and verifies one neuron. Failures are recorded, not thrown.
inline NeuronRecord process_neuron(Teacher& teacher, const FiringProfile& profile, std::span<const SampleMeta> meta,
                                   Index neuron, const AutoInterpConfig& cfg) {
    NeuronRecord rec;
    rec.neuron_id = neuron;
    try {
        const auto pools = build_pools(profile, meta, neuron, cfg.n_label, cfg.n_verify, cfg.seed);
        const auto label = generate_label(teacher, pools);
        return verify_label(teacher, label, pools);
    } catch (const InsufficientExamples& e) {
        rec.status = NeuronStatus::insufficient_examples;
        rec.error = e.what();
    } catch (const EmptyLabel& e) {
        rec.status = NeuronStatus::empty_label;
        rec.error = e.what();
    } catch (const EndpointError& e) {
        rec.status = NeuronStatus::teacher_failure;
        rec.error = e.what();
    }
    return rec;
}

/// Runs the loop over `neurons` (all latents when empty) and returns records sorted by neuron id.
inline std::vector<NeuronRecord> label_neurons(Teacher& teacher, const FiringProfile& profile,
                                               std::span<const SampleMeta> meta, const AutoInterpConfig& cfg,
                                               std::vector<Index> neurons = {}) {
    cfg.validate();
    if (neurons.empty()) {
        neurons.resize(profile.latent_width());
        std::iota(neurons.begin(), neurons.end(), Index{0});
    }
    std::sort(neurons.begin(), neurons.end());
    neurons.erase(std::unique(neurons.begin(), neurons.end()), neurons.end());
    std::vector<NeuronRecord> out(neurons.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < neurons.size(); i = next++)
            out[i] = process_neuron(teacher, profile, meta, neurons[i], cfg);
    };
    const auto n_threads = std::min(cfg.threads, neurons.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

/// Ids of labeled neurons whose F1 strictly exceeds the threshold.
inline std::vector<Index> high_fidelity_pool(std::span<const NeuronRecord> records, double f1_threshold) {
    if (!(f1_threshold >= 0.0 && f1_threshold <= 1.0)) throw ValidationError("f1_threshold must lie in [0, 1]");
    std::vector<Index> out;
    for (const auto& r : records)
        if (r.labeled() && r.f1 > f1_threshold) out.push_back(r.neuron_id);
    std::sort(out.begin(), out.end());
    return out;
}

inline nlohmann::json to_json(const NeuronRecord& r) {
    auto bits = [](const std::vector<bool>& v) {
        std::string s;
        for (bool b : v) s += b ? '1' : '0';
        return s;
    };
    return {{"neuron_id", r.neuron_id},     {"status", to_string(r.status)}, {"label", r.label},
            {"accuracy", r.accuracy},       {"precision", r.precision},      {"recall", r.recall},
            {"f1", r.f1},                   {"sample_ids", r.sample_ids},    {"predictions", bits(r.predictions)},
            {"truth", bits(r.truth)},       {"flagged", bits(r.flagged)},    {"error", r.error}};
}

inline NeuronRecord record_from_json(const nlohmann::json& j) {
    auto bits = [](const std::string& s) {
        std::vector<bool> v;
        for (char c : s) {
            if (c != '0' && c != '1') throw FormatError("bad bit string '" + s + "'");
            v.push_back(c == '1');
        }
        return v;
    };
    NeuronRecord r;
    r.neuron_id = j.at("neuron_id").get<Index>();
    r.status = status_from_string(j.at("status").get<std::string>());
    r.label = j.at("label").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    r.predictions = bits(j.at("predictions").get<std::string>());
    r.truth = bits(j.at("truth").get<std::string>());
    r.flagged = bits(j.at("flagged").get<std::string>());
    r.error = j.value("error", "");
    if (r.predictions.size() != r.truth.size() || r.flagged.size() != r.truth.size() ||
        r.sample_ids.size() != r.truth.size())
        throw FormatError("record for neuron " + std::to_string(r.neuron_id) + " has ragged prediction arrays");
    return r;
}

inline void write_records(std::span<const NeuronRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& r : records) out << to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<NeuronRecord> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<NeuronRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ground-truth mock teacher.

/// Labels a neuron "concept-<id>" by recognising its top-activation texts, and answers
/// verification questions from the firing profile. Pure and reentrant.
/// Neurons whose top-activation texts coincide get the lowest such id as their label.
class PerfectTeacher : public Teacher {
public:
    PerfectTeacher(const FiringProfile& profile, std::span<const SampleMeta> meta, std::size_t n_label)
        : firing_(profile.latent_width()) {
        if (meta.size() != profile.n_samples()) throw DimensionError("PerfectTeacher: metadata mismatch");
        for (Index j = 0; j < profile.latent_width(); ++j) {
            for (const auto& f : profile.neurons[j]) firing_[j].insert(meta[f.sample].text);
            const auto ranked = rank_by_activation(profile, j);
            if (ranked.size() < n_label) continue;
            std::string key;
            for (std::size_t r = 0; r < n_label; ++r) key += meta[ranked[r].sample].text + '\x1f';
            by_top_texts_.emplace(key, j);
        }
    }

    std::string complete(const std::string& prompt) override {
        std::istringstream in(prompt);
        std::string line, label;
        std::vector<std::string> snippets;
        bool expect_label = false;
        while (std::getline(in, line)) {
            if (expect_label) {
                label = nlohmann::json::parse(line).get<std::string>();
                expect_label = false;
            } else if (line.rfind("A feature in a language model's hidden state carries the label:", 0) == 0) {
                expect_label = true;
            } else if (line.rfind("Snippet: ", 0) == 0) {
                snippets.push_back(nlohmann::json::parse(line.substr(9)).get<std::string>());
            } else {
                const auto dot = line.find(". \"");
                if (dot != std::string::npos && dot > 0 &&
                    std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(dot), ::isdigit))
                    snippets.push_back(nlohmann::json::parse(line.substr(dot + 2)).get<std::string>());
            }
        }
        if (!label.empty()) {
            if (label.rfind("concept-", 0) != 0 || snippets.size() != 1) return "unsure";
            const auto j = static_cast<Index>(std::stoull(label.substr(8)));
            return j < firing_.size() && firing_[j].count(snippets[0]) ? "yes" : "no";
        }
        std::string key;
        for (const auto& s : snippets) key += s + '\x1f';
        const auto it = by_top_texts_.find(key);
        return it == by_top_texts_.end() ? "unknown" : "concept-" + std::to_string(it->second);
    }

private:
    std::vector<std::set<std::string>> firing_;
    std::multimap<std::string, Index> by_top_texts_;
};

// ---------------------------------------------------------------------------
// Hyperparameter sweep.

using TeacherFactory = std::function<std::shared_ptr<Teacher>(const FiringProfile&, std::span<const SampleMeta>)>;

struct SweepRow {
    std::size_t k = 0;
    std::size_t h = 0;
    double mean_f1 = std::numeric_limits<double>::quiet_NaN();  // over labeled neurons
    std::size_t labeled = 0;
    std::size_t ever_active = 0;
    std::size_t high_fidelity = 0;
    std::string error;
};

/// One SAE per (k, h) pair of the cartesian product, in k-major order.
inline std::vector<SweepRow> sweep_hyperparams(const ActivationMatrix& data, std::span<const SampleMeta> meta,
                                               std::span<const std::size_t> k_grid, std::span<const std::size_t> h_grid,
                                               const TrainConfig& base, const AutoInterpConfig& ai,
                                               const TeacherFactory& make_teacher) {
    if (k_grid.empty() || h_grid.empty()) throw ValidationError("sweep grids must be non-empty");
    std::vector<SweepRow> rows;
    for (auto k : k_grid)
        for (auto h : h_grid) {
            SweepRow row;
            row.k = k;
            row.h = h;
            try {
                auto cfg = base;
                cfg.sparsity_k = k;
                cfg.latent_width = h;
                const auto trained = train(data, cfg);
                row.ever_active = trained.stats.ever_active_count();
                const auto profile = firing_profile(trained.model, data, meta);
                auto teacher = make_teacher(profile, meta);
                const auto records = label_neurons(*teacher, profile, meta, ai);
                double sum = 0.0;
                for (const auto& r : records)
                    if (r.labeled()) {
                        sum += r.f1;
                        ++row.labeled;
                    }
                if (row.labeled) row.mean_f1 = sum / static_cast<double>(row.labeled);
                row.high_fidelity = high_fidelity_pool(records, ai.f1_threshold).size();
            } catch (const Error& e) {
                row.error = e.what();
            }
            rows.push_back(row);
        }
    return rows;
}

}  // namespace featscope
