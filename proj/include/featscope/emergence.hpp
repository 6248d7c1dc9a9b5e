#pragma once

// Concept-activation percentages along training time, layer depth and model scale.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "featscope/activation_store.hpp"
#include "featscope/alignment.hpp"
#include "featscope/autointerp.hpp"
#include "featscope/detail/csv.hpp"
#include "featscope/error.hpp"
#include "featscope/eyesee.hpp"
#include "featscope/sae.hpp"
#include "featscope/sae_io.hpp"

namespace featscope {

enum class Axis { time, space, scale };

inline std::string to_string(Axis a) {
    switch (a) {
        case Axis::time: return "time";
        case Axis::space: return "space";
        case Axis::scale: return "scale";
    }
    return "?";
}

inline Axis axis_from_string(const std::string& s) {
    if (s == "time") return Axis::time;
    if (s == "space") return Axis::space;
    if (s == "scale") return Axis::scale;
    throw ValidationError("unknown axis '" + s + "' (expected time, space or scale)");
}

inline std::uint64_t axis_value(const AxisCoord& c, Axis a) {
    switch (a) {
        case Axis::time: return c.checkpoint_step;
        case Axis::space: return c.layer_index;
        case Axis::scale: return c.param_count;
    }
    return 0;
}

/// The 25 public training checkpoints of the time axis.
inline std::vector<std::uint64_t> checkpoint_schedule() {
    std::vector<std::uint64_t> s{0, 1, 2, 4, 8, 16, 256, 512, 1000, 5000};
    for (std::uint64_t step = 10000; step <= 140000; step += 10000) s.push_back(step);
    s.push_back(143000);
    return s;
}

/// A latent is active when it fires on at least one sample and on at least a
/// fraction `min_fraction` of the evaluation samples.
struct ActivityRule {
    double min_fraction = 0.0;

    void validate() const {
        if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) throw ValidationError("activity min_fraction must lie in [0, 1]");
    }
    bool active(std::uint64_t fires, std::uint64_t n_samples) const {
        return fires >= 1 && static_cast<double>(fires) >= min_fraction * static_cast<double>(n_samples);
    }
    std::string describe() const { return "fires>=1 && fraction>=" + detail::fixed(min_fraction, 6); }
};

enum class GlobalMode { union_of_subjects, all_labeled };

inline std::string to_string(GlobalMode m) { return m == GlobalMode::union_of_subjects ? "union" : "labeled"; }

inline GlobalMode global_mode_from_string(const std::string& s) {
    if (s == "union") return GlobalMode::union_of_subjects;
    if (s == "labeled") return GlobalMode::all_labeled;
    throw ValidationError("unknown global mode '" + s + "' (expected union or labeled)");
}

struct ConceptGroup {
    std::string subject;
    std::vector<Index> neurons;
};

/// The neuron sets an emergence run reports on.
struct ConceptCatalog {
    std::vector<ConceptGroup> subjects;
    std::vector<Index> global;  // sorted, distinct
    GlobalMode global_mode = GlobalMode::union_of_subjects;
    std::string version;

    static ConceptCatalog from_sets(std::span<const ConceptSet> sets, std::string version,
                                    std::span<const Index> labeled = {}, GlobalMode mode = GlobalMode::union_of_subjects) {
        ConceptCatalog c;
        c.version = std::move(version);
        c.global_mode = mode;
        std::set<Index> pool;
        for (const auto& s : sets) {
            c.subjects.push_back({s.query, s.neuron_ids()});
            pool.insert(c.subjects.back().neurons.begin(), c.subjects.back().neurons.end());
        }
        if (mode == GlobalMode::all_labeled) pool = std::set<Index>(labeled.begin(), labeled.end());
        c.global.assign(pool.begin(), pool.end());
        return c;
    }
};

struct SubjectRate {
    std::string subject;
    std::size_t active = 0;
    std::size_t total = 0;

    /// NaN for an empty concept set.
    double percent() const {
        return total == 0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 * double(active) / double(total);
    }
    friend bool operator==(const SubjectRate&, const SubjectRate&) = default;
};

struct ActivationRates {
    std::vector<SubjectRate> subjects;
    SubjectRate global{"(global)"};
    std::vector<std::string> empty_subjects;

    friend bool operator==(const ActivationRates&, const ActivationRates&) = default;
};

/// Positive post-top-k firings per latent over the rows of `data`.
inline std::vector<std::uint64_t> latent_fire_counts(const SaeModel& model, const ActivationMatrix& data) {
    model.validate();
    if (data.dim() != model.input_dim())
        throw DimensionError("data has d=" + std::to_string(data.dim()) + ", SAE expects " + std::to_string(model.input_dim()));
    std::vector<std::uint64_t> counts(model.latent_width(), 0);
    SaeModel::Vector x, z;
    for (Index i = 0; i < data.n_samples(); ++i) {
        load_input(model, data, i, x);
        z = encode(model, x);
        for (Index j : topk_indices(z, model.sparsity_k))
            if (z(static_cast<Eigen::Index>(j)) > 0.0f) ++counts[j];
    }
    return counts;
}

inline ActivationRates rates_from_counts(std::span<const std::uint64_t> counts, std::uint64_t n_samples,
                                         const ConceptCatalog& catalog, const ActivityRule& rule) {
    rule.validate();
    auto tally = [&](const std::string& name, std::span<const Index> neurons) {
        SubjectRate r{name};
        for (Index j : neurons) {
            if (j >= counts.size())
                throw ValidationError("concept neuron " + std::to_string(j) + " outside latent width " + std::to_string(counts.size()));
            ++r.total;
            if (rule.active(counts[j], n_samples)) ++r.active;
        }
        return r;
    };
    ActivationRates out;
    for (const auto& g : catalog.subjects) {
        out.subjects.push_back(tally(g.subject, g.neurons));
        if (g.neurons.empty()) out.empty_subjects.push_back(g.subject);
    }
    out.global = tally("(global)", catalog.global);
    return out;
}

inline ActivationRates concept_activation_rate(const SaeModel& model, const ActivationMatrix& data,
                                               const ConceptCatalog& catalog, const ActivityRule& rule = {}) {
    return rates_from_counts(latent_fire_counts(model, data), data.n_samples(), catalog, rule);
}

struct CurvePoint {
    std::uint64_t coordinate = 0;
    std::optional<ActivationRates> rates;  // empty for a gap
    std::string error;
};

struct EmergenceCurve {
    Axis axis = Axis::time;
    std::vector<CurvePoint> points;  // ascending coordinate
    std::string activity_rule;
    std::string concept_db_version;
    std::string global_mode;
    std::string sae_checksum;
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// One point per dump, ordered by its coordinate on `axis`. A dump that cannot be probed
/// becomes a gap carrying the error. Scale-axis dumps must already be in the SAE's basis
/// (see align_for_scale_axis).
inline EmergenceCurve emergence_sweep(Axis axis, std::span<const ActivationMatrix> dumps, const SaeModel& model,
                                      const ConceptCatalog& catalog, const ActivityRule& rule = {},
                                      std::size_t threads = 1) {
    rule.validate();
    if (dumps.empty()) throw ValidationError("emergence_sweep: no dumps");
    std::vector<std::size_t> order(dumps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return axis_value(dumps[a].axis(), axis) < axis_value(dumps[b].axis(), axis); });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (axis_value(dumps[order[i]].axis(), axis) == axis_value(dumps[order[i - 1]].axis(), axis))
            throw ValidationError("emergence_sweep: two dumps share " + to_string(axis) + " coordinate " +
                                  std::to_string(axis_value(dumps[order[i]].axis(), axis)));

    EmergenceCurve curve;
    curve.axis = axis;
    curve.activity_rule = rule.describe();
    curve.concept_db_version = catalog.version;
    curve.global_mode = to_string(catalog.global_mode);
    curve.sae_checksum = checkpoint_checksum(model);
    curve.points.resize(dumps.size());
    detail::parallel_for(dumps.size(), threads, [&](std::size_t i) {
        const auto& d = dumps[order[i]];
        auto& p = curve.points[i];
        p.coordinate = axis_value(d.axis(), axis);
        try {
            p.rates = concept_activation_rate(model, d, catalog, rule);
        } catch (const Error& e) {
            p.error = e.what();
        }
    });
    return curve;
}

/// Maps every dump into the reference basis by Procrustes. Dumps with the reference's
/// parameter count are passed through unchanged.
inline std::vector<ActivationMatrix> align_for_scale_axis(std::span<const ActivationMatrix> dumps,
                                                          const ActivationMatrix& reference, bool center = true,
                                                          std::vector<AlignmentResult>* alignments = nullptr) {
    std::vector<ActivationMatrix> out;
    for (const auto& d : dumps) {
        if (d.axis().param_count == reference.axis().param_count && d.dim() == reference.dim()) {
            out.push_back(d);
            continue;
        }
        const auto r = procrustes_align(d, reference, center);
        out.push_back(align_to_reference(d, r));
        if (alignments) alignments->push_back(r);
    }
    return out;
}

struct Probe {
    std::uint64_t layer = 0;
    SaeModel model;
    ConceptCatalog catalog;
};

/// Rows are probes (in the given order), columns are data layers ascending.
struct SpatialGrid {
    std::vector<std::uint64_t> probe_layers;
    std::vector<std::uint64_t> data_layers;
    std::vector<std::vector<std::optional<ActivationRates>>> cells;
    std::vector<std::vector<std::string>> errors;
    std::string activity_rule;

    /// Global percentage per cell, NaN for gaps.
    std::vector<std::vector<double>> global_percent() const {
        std::vector<std::vector<double>> out;
        for (const auto& row : cells) {
            out.emplace_back();
            for (const auto& c : row) out.back().push_back(c ? c->global.percent() : std::numeric_limits<double>::quiet_NaN());
        }
        return out;
    }
};

inline SpatialGrid spatial_probe(std::span<const Probe> probes, std::span<const ActivationMatrix> layers,
                                 const ActivityRule& rule = {}, std::size_t threads = 1) {
    rule.validate();
    if (probes.empty() || layers.empty()) throw ValidationError("spatial_probe needs at least one probe and one layer");
    std::vector<std::size_t> order(layers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return layers[a].axis().layer_index < layers[b].axis().layer_index; });
    SpatialGrid g;
    g.activity_rule = rule.describe();
    for (auto i : order) {
        if (!g.data_layers.empty() && g.data_layers.back() == layers[i].axis().layer_index)
            throw ValidationError("spatial_probe: duplicate layer " + std::to_string(layers[i].axis().layer_index));
        g.data_layers.push_back(layers[i].axis().layer_index);
    }
    for (const auto& p : probes) g.probe_layers.push_back(p.layer);
    g.cells.assign(probes.size(), std::vector<std::optional<ActivationRates>>(layers.size()));
    g.errors.assign(probes.size(), std::vector<std::string>(layers.size()));
    detail::parallel_for(probes.size() * layers.size(), threads, [&](std::size_t k) {
        const std::size_t r = k / layers.size(), c = k % layers.size();
        try {
            g.cells[r][c] = concept_activation_rate(probes[r].model, layers[order[c]], probes[r].catalog, rule);
        } catch (const Error& e) {
            g.errors[r][c] = e.what();
        }
    });
    return g;
}

/// A dip and recovery along one probe row: some layer falls at least `min_drop` points
/// below both an earlier and a later layer.
struct Reemergence {
    bool present = false;
    std::size_t early = 0, hidden = 0, late = 0;  // column indices
    double drop = 0.0;                            // min(early, late) - hidden
};

inline Reemergence detect_reemergence(std::span<const double> row, double min_drop = 50.0) {
    Reemergence best;
    const std::size_t n = row.size();
    for (std::size_t j = 1; j + 1 < n; ++j) {
        if (std::isnan(row[j])) continue;
        std::size_t i_best = n, k_best = n;
        for (std::size_t i = 0; i < j; ++i)
            if (!std::isnan(row[i]) && (i_best == n || row[i] > row[i_best])) i_best = i;
        for (std::size_t k = j + 1; k < n; ++k)
            if (!std::isnan(row[k]) && (k_best == n || row[k] > row[k_best])) k_best = k;
        if (i_best == n || k_best == n) continue;
        const double drop = std::min(row[i_best], row[k_best]) - row[j];
        if (drop >= min_drop && drop > best.drop) best = {true, i_best, j, k_best, drop};
    }
    return best;
}

// Output: CSV preceded by "# key: value" provenance lines.

inline void write_curve_csv(const EmergenceCurve& c, std::ostream& out) {
    out << "# axis: " << to_string(c.axis) << "\n# activity_rule: " << c.activity_rule
        << "\n# concept_db_version: " << c.concept_db_version << "\n# global_mode: " << c.global_mode
        << "\n# sae_checksum: " << c.sae_checksum << "\n";
    detail::write_csv_row(out, {"coordinate", "subject", "active", "total", "percent", "error"});
    for (const auto& p : c.points) {
        const auto coord = std::to_string(p.coordinate);
        if (!p.rates) {
            detail::write_csv_row(out, {coord, "", "", "", "", p.error});
            continue;
        }
        auto row = [&](const SubjectRate& r) {
            detail::write_csv_row(out, {coord, r.subject, std::to_string(r.active), std::to_string(r.total),
                                        r.total ? detail::fixed(r.percent(), 6) : "", r.total ? "" : "empty concept set"});
        };
        row(p.rates->global);
        for (const auto& s : p.rates->subjects) row(s);
    }
}

inline void write_curve_csv(const EmergenceCurve& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_curve_csv(c, out);
    if (!out) throw IoError("write failed: " + path);
}

inline EmergenceCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    EmergenceCurve c;
    std::map<std::string, std::string> prov;
    std::string body, line;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            const auto colon = line.find(": ");
            if (colon == std::string::npos) throw FormatError(path + ": malformed provenance line");
            prov[line.substr(2, colon - 2)] = line.substr(colon + 2);
        } else {
            body += line + "\n";
        }
    }
    try {
        c.axis = axis_from_string(prov.at("axis"));
        c.activity_rule = prov.at("activity_rule");
        c.concept_db_version = prov.at("concept_db_version");
        c.global_mode = prov.at("global_mode");
        c.sae_checksum = prov.at("sae_checksum");
    } catch (const std::out_of_range&) {
        throw FormatError(path + ": provenance block incomplete");
    }
    std::istringstream bs(body);
    const auto rows = detail::read_csv(bs);
    if (rows.empty() || rows[0] != std::vector<std::string>{"coordinate", "subject", "active", "total", "percent", "error"})
        throw FormatError(path + ": missing curve header");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 6) throw FormatError(path + ": row " + std::to_string(r) + " has " + std::to_string(f.size()) + " fields");
        const auto coord = std::stoull(f[0]);
        if (c.points.empty() || c.points.back().coordinate != coord) c.points.push_back({coord, std::nullopt, ""});
        auto& p = c.points.back();
        if (f[1].empty()) {
            p.error = f[5];
            continue;
        }
        SubjectRate s{f[1], std::stoull(f[2]), std::stoull(f[3])};
        if (!p.rates) {  // the global row leads each point
            p.rates.emplace();
            p.rates->global = s;
            continue;
        }
        if (s.total == 0) p.rates->empty_subjects.push_back(s.subject);
        p.rates->subjects.push_back(s);
    }
    return c;
}

inline void write_grid_csv(const SpatialGrid& g, std::ostream& out) {
    out << "# activity_rule: " << g.activity_rule << "\n";
    detail::write_csv_row(out, {"probe_layer", "data_layer", "active", "total", "percent", "error"});
    for (std::size_t r = 0; r < g.cells.size(); ++r)
        for (std::size_t c = 0; c < g.data_layers.size(); ++c) {
            const auto& cell = g.cells[r][c];
            detail::write_csv_row(out, {std::to_string(g.probe_layers[r]), std::to_string(g.data_layers[c]),
                                        cell ? std::to_string(cell->global.active) : "",
                                        cell ? std::to_string(cell->global.total) : "",
                                        cell && cell->global.total ? detail::fixed(cell->global.percent(), 6) : "",
                                        g.errors[r][c]});
        }
}

}  // namespace featscope
