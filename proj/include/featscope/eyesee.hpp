#pragma once

// Subject-to-neuron concept matching over embedded neuron labels.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "featscope/autointerp.hpp"
#include "featscope/cosine.hpp"
#include "featscope/detail/csv.hpp"
#include "featscope/embedder.hpp"
#include "featscope/error.hpp"

namespace featscope {

struct LabelEntry {
    Index neuron_id = 0;
    std::string label;
    double f1 = 0.0;
    Embedding vector;
};

/// Immutable after build; safe to query from several threads.
struct LabelVectorDb {
    std::vector<LabelEntry> entries;  // ascending neuron_id
    std::size_t embed_dim = 0;
    std::string provider_id;

    const LabelEntry* find(Index neuron) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), neuron,
                                   [](const LabelEntry& e, Index n) { return e.neuron_id < n; });
        return it != entries.end() && it->neuron_id == neuron ? &*it : nullptr;
    }
};

struct LabelFailure {
    Index neuron_id = 0;
    std::string label;
    std::string error;
};

struct LabelDbBuild {
    LabelVectorDb db;
    std::vector<LabelFailure> failures;
    std::size_t embed_calls = 0;
};

/// Embeds each distinct label of the high-fidelity neurons once. Labels the embedder cannot
/// handle are reported in `failures`; the rest still enter the database.
inline LabelDbBuild build_label_db(std::span<const NeuronRecord> records, Embedder& embedder,
                                   double f1_threshold = 0.9) {
    if (records.empty()) throw ValidationError("build_label_db: no records");
    const auto keep = high_fidelity_pool(records, f1_threshold);
    std::vector<const NeuronRecord*> chosen;
    for (const auto& r : records)
        if (std::binary_search(keep.begin(), keep.end(), r.neuron_id)) chosen.push_back(&r);
    std::sort(chosen.begin(), chosen.end(), [](auto a, auto b) { return a->neuron_id < b->neuron_id; });

    LabelDbBuild out;
    out.db.provider_id = embedder.provider_id();
    std::map<std::string, std::pair<Embedding, std::string>> cache;  // label -> (vector, error)
    for (const auto* r : chosen) {
        if (!out.db.entries.empty() && out.db.entries.back().neuron_id == r->neuron_id)
            throw ValidationError("build_label_db: duplicate neuron " + std::to_string(r->neuron_id));
        auto it = cache.find(r->label);
        if (it == cache.end()) {
            std::pair<Embedding, std::string> slot;
            try {
                ++out.embed_calls;
                slot.first = embedder.embed_one(r->label);
                if (slot.first.size() == 0 || slot.first.norm() == 0.0 || !slot.first.allFinite())
                    slot.second = "embedding is zero or non-finite";
                else if (out.db.embed_dim != 0 && static_cast<std::size_t>(slot.first.size()) != out.db.embed_dim)
                    slot.second = "embedding width " + std::to_string(slot.first.size()) + " differs from " +
                                  std::to_string(out.db.embed_dim);
            } catch (const Error& e) {
                slot.second = e.what();
            }
            it = cache.emplace(r->label, std::move(slot)).first;
        }
        if (!it->second.second.empty()) {
            out.failures.push_back({r->neuron_id, r->label, it->second.second});
            continue;
        }
        if (out.db.embed_dim == 0) out.db.embed_dim = static_cast<std::size_t>(it->second.first.size());
        out.db.entries.push_back({r->neuron_id, r->label, r->f1, it->second.first});
    }
    return out;
}

struct ConceptMatch {
    Index neuron_id = 0;
    std::string label;
    double similarity = 0.0;
    double f1 = 0.0;
};

struct ConceptSet {
    std::string query;
    Embedding query_vector;
    double threshold = 0.3;
    std::vector<ConceptMatch> matches;  // similarity descending, ties by neuron_id

    std::vector<Index> neuron_ids() const {
        std::vector<Index> ids;
        for (const auto& m : matches) ids.push_back(m.neuron_id);
        return ids;
    }
};

/// All database neurons whose label similarity to the query vector is >= tau.
inline ConceptSet match_vector(const std::string& query, const Embedding& query_vector, const LabelVectorDb& db,
                               double tau) {
    ConceptSet set;
    set.query = query;
    set.query_vector = query_vector;
    set.threshold = tau;
    if (!db.entries.empty() && static_cast<std::size_t>(query_vector.size()) != db.embed_dim)
        throw DimensionError("query embedding width " + std::to_string(query_vector.size()) + " vs database " +
                             std::to_string(db.embed_dim));
    for (const auto& e : db.entries) {
        const double s = cosine_similarity(query_vector, e.vector);
        if (s >= tau) set.matches.push_back({e.neuron_id, e.label, s, e.f1});
    }
    std::sort(set.matches.begin(), set.matches.end(), [](const ConceptMatch& a, const ConceptMatch& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.neuron_id < b.neuron_id;
    });
    return set;
}

/// Embeds the raw query string and matches it against the database.
inline ConceptSet match_concepts(const std::string& query, const LabelVectorDb& db, Embedder& embedder,
                                 double tau = 0.3) {
    if (query.empty()) throw ValidationError("match_concepts: empty query");
    return match_vector(query, embedder.embed_one(query), db, tau);
}

// Concept tables: subject,neuron_id,label,cosine,f1

inline void write_concept_table(std::span<const ConceptSet> sets, std::ostream& out) {
    detail::write_csv_row(out, {"subject", "neuron_id", "label", "cosine", "f1"});
    for (const auto& s : sets)
        for (const auto& m : s.matches)
            detail::write_csv_row(out, {s.query, std::to_string(m.neuron_id), m.label, detail::fixed(m.similarity, 6),
                                        detail::fixed(m.f1, 6)});
}

inline void write_concept_table(std::span<const ConceptSet> sets, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_concept_table(sets, out);
    if (!out) throw IoError("write failed: " + path);
}

/// Reads a concept table back into one ConceptSet per subject, in first-appearance order.
/// Query vectors are not stored and come back empty.
inline std::vector<ConceptSet> read_concept_table(const std::string& path, double tau = 0.3) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto rows = detail::read_csv(in);
    if (rows.empty() || rows[0] != std::vector<std::string>{"subject", "neuron_id", "label", "cosine", "f1"})
        throw FormatError(path + ": missing concept table header");
    std::vector<ConceptSet> sets;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != 5) throw FormatError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " fields");
        auto it = std::find_if(sets.begin(), sets.end(), [&](const ConceptSet& s) { return s.query == row[0]; });
        if (it == sets.end()) {
            sets.push_back({row[0], {}, tau, {}});
            it = sets.end() - 1;
        }
        try {
            it->matches.push_back({static_cast<Index>(std::stoull(row[1])), row[2], std::stod(row[3]), std::stod(row[4])});
        } catch (const std::exception&) {
            throw FormatError(path + ": row " + std::to_string(r + 1) + " has a malformed number");
        }
    }
    return sets;
}

}  // namespace featscope
