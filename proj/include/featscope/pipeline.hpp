#pragma once

// Run configuration and the subcommands of the featscope tool.
//
// Artifacts written under output_dir:
//   sae.esae             trained SAE (train)
//   train_trace.csv      per-epoch loss and dead count (train)
//   sweep.csv            hyperparameter sweep (sweep)
//   records.jsonl        neuron labels and verification scores (label)
//   concepts.csv         subject concept sets (match)
//   alignment/<name>.esad, alignment.csv   Procrustes maps and scores (align)
//   curve_<axis>.csv, grid.csv             emergence curves and probe grid (emerge)
// Every artifact has a <file>.provenance.json sidecar.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "featscope/activation_store.hpp"
#include "featscope/alignment.hpp"
#include "featscope/autointerp.hpp"
#include "featscope/detail/csv.hpp"
#include "featscope/embedder.hpp"
#include "featscope/emergence.hpp"
#include "featscope/error.hpp"
#include "featscope/eyesee.hpp"
#include "featscope/sae.hpp"
#include "featscope/sae_io.hpp"
#include "featscope/teacher.hpp"

namespace featscope {

inline constexpr const char* kVersion = "0.1.0";

/// Bad configuration, bad usage or a missing input; the tool exits with code 2.
struct ConfigError : Error {
    using Error::Error;
};

struct TeacherSettings {
    std::string kind = "http";  // http | replay | perfect
    TeacherEndpoint endpoint;
    std::string replay;  // transcript for kind=replay
    std::string record;  // optional transcript to append to
};

struct EmbedderSettings {
    std::string kind = "http";  // http | fixture | toy
    EmbedderEndpoint endpoint;
    std::string fixture;
    std::size_t dim = 64;
};

struct ProbeSpec {
    std::uint64_t layer = 0;
    std::string sae;
    std::string concepts;
};

struct RunConfig {
    nlohmann::json raw;  // after overrides, before path resolution
    std::filesystem::path base_dir;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::string dump;

    TrainConfig train;
    std::vector<std::size_t> k_grid, h_grid;

    std::string label_dump;
    AutoInterpConfig autointerp;
    std::vector<Index> neurons;
    TeacherSettings teacher;

    EmbedderSettings embedder;
    std::vector<std::string> queries;
    double tau = 0.3;

    std::string align_reference;
    std::vector<std::string> align_sources;
    bool align_center = true;

    Axis axis = Axis::time;
    std::vector<std::string> emerge_dumps;
    ActivityRule rule;
    GlobalMode global_mode = GlobalMode::union_of_subjects;
    std::string scale_reference;
    std::size_t threads = 1;
    std::vector<ProbeSpec> probes;

    std::string hash() const { return detail::hex64(detail::fnv1a64(raw.dump())); }
    std::filesystem::path out(const std::string& name) const { return std::filesystem::path(output_dir) / name; }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& into, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

inline void in_unit(double v, const std::string& name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name + " must lie in [0, 1], got " + std::to_string(v));
}

inline void read_endpoint(const nlohmann::json& j, HttpEndpoint& ep, const std::string& where) {
    read(j, "base_url", ep.base_url, where);
    read(j, "timeout_s", ep.timeout_s, where);
    read(j, "retry_budget", ep.retry_budget, where);
    read(j, "rate_limit_rps", ep.rate_limit_rps, where);
    read(j, "backoff_initial_s", ep.backoff_initial_s, where);
}

/// "a.b.c=value": value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    nlohmann::json* node = &j;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
        node = &(*node)[key.substr(start, dot - start)];
        if (!node->is_object() && !node->is_null()) throw ConfigError("override '" + key + "' descends into a non-object");
    }
    (*node)[key.substr(start)] = value;
}

}  // namespace detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    using detail::read;
    RunConfig c;
    c.raw = doc;
    c.base_dir = base_dir;
    detail::check_keys(doc, {"output_dir", "seed", "dump", "train", "sweep", "label", "teacher", "embedder", "match", "align", "emerge"},
                       "config");
    read(doc, "output_dir", c.output_dir, "config");
    read(doc, "seed", c.seed, "config");
    read(doc, "dump", c.dump, "config");
    c.train.seed = c.seed;
    c.autointerp.seed = c.seed;

    const auto section = [&](const char* name) { return doc.contains(name) ? doc.at(name) : nlohmann::json::object(); };

    const auto t = section("train");
    detail::check_keys(t, {"sparsity_k", "latent_width", "epochs", "batch_size", "learning_rate", "multi_k_levels", "auxk_count",
                           "auxk_weight", "dead_threshold_steps", "center_inputs", "seed"},
                       "train");
    read(t, "sparsity_k", c.train.sparsity_k, "train");
    read(t, "latent_width", c.train.latent_width, "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "auxk_count", c.train.auxk_count, "train");
    read(t, "auxk_weight", c.train.auxk_weight, "train");
    read(t, "dead_threshold_steps", c.train.dead_threshold_steps, "train");
    read(t, "center_inputs", c.train.center_inputs, "train");
    read(t, "seed", c.train.seed, "train");
    if (t.contains("multi_k_levels")) {
        std::vector<std::pair<std::size_t, double>> levels;
        read(t, "multi_k_levels", levels, "train");
        c.train.multi_k_levels.clear();
        for (auto [mult, w] : levels) c.train.multi_k_levels.push_back({mult, w});
    }

    const auto s = section("sweep");
    detail::check_keys(s, {"k_grid", "h_grid"}, "sweep");
    read(s, "k_grid", c.k_grid, "sweep");
    read(s, "h_grid", c.h_grid, "sweep");

    const auto l = section("label");
    detail::check_keys(l, {"dump", "n_label", "n_verify", "f1_threshold", "threads", "neurons", "seed"}, "label");
    read(l, "dump", c.label_dump, "label");
    read(l, "n_label", c.autointerp.n_label, "label");
    read(l, "n_verify", c.autointerp.n_verify, "label");
    read(l, "f1_threshold", c.autointerp.f1_threshold, "label");
    read(l, "threads", c.autointerp.threads, "label");
    read(l, "neurons", c.neurons, "label");
    read(l, "seed", c.autointerp.seed, "label");

    const auto te = section("teacher");
    detail::check_keys(te, {"kind", "base_url", "model", "timeout_s", "retry_budget", "rate_limit_rps", "backoff_initial_s", "replay", "record"},
                       "teacher");
    read(te, "kind", c.teacher.kind, "teacher");
    detail::read_endpoint(te, c.teacher.endpoint, "teacher");
    read(te, "model", c.teacher.endpoint.model, "teacher");
    read(te, "replay", c.teacher.replay, "teacher");
    read(te, "record", c.teacher.record, "teacher");

    const auto em = section("embedder");
    detail::check_keys(em, {"kind", "base_url", "model", "timeout_s", "retry_budget", "rate_limit_rps", "backoff_initial_s", "fixture", "dim"},
                       "embedder");
    read(em, "kind", c.embedder.kind, "embedder");
    detail::read_endpoint(em, c.embedder.endpoint, "embedder");
    read(em, "model", c.embedder.endpoint.model, "embedder");
    read(em, "fixture", c.embedder.fixture, "embedder");
    read(em, "dim", c.embedder.dim, "embedder");

    const auto m = section("match");
    detail::check_keys(m, {"queries", "tau"}, "match");
    read(m, "queries", c.queries, "match");
    read(m, "tau", c.tau, "match");

    const auto a = section("align");
    detail::check_keys(a, {"reference", "sources", "center"}, "align");
    read(a, "reference", c.align_reference, "align");
    read(a, "sources", c.align_sources, "align");
    read(a, "center", c.align_center, "align");

    const auto e = section("emerge");
    detail::check_keys(e, {"axis", "dumps", "min_fraction", "global_mode", "reference", "threads", "probes"}, "emerge");
    std::string axis = "time", mode = "union";
    read(e, "axis", axis, "emerge");
    read(e, "global_mode", mode, "emerge");
    read(e, "dumps", c.emerge_dumps, "emerge");
    read(e, "min_fraction", c.rule.min_fraction, "emerge");
    read(e, "reference", c.scale_reference, "emerge");
    read(e, "threads", c.threads, "emerge");
    try {
        c.axis = axis_from_string(axis);
        c.global_mode = global_mode_from_string(mode);
    } catch (const ValidationError& err) {
        throw ConfigError(err.what());
    }
    if (e.contains("probes")) {
        if (!e.at("probes").is_array()) throw ConfigError("emerge.probes must be an array");
        for (const auto& p : e.at("probes")) {
            detail::check_keys(p, {"layer", "sae", "concepts"}, "emerge.probes[]");
            ProbeSpec ps;
            read(p, "layer", ps.layer, "emerge.probes[]");
            read(p, "sae", ps.sae, "emerge.probes[]");
            read(p, "concepts", ps.concepts, "emerge.probes[]");
            c.probes.push_back(ps);
        }
    }

    // Paths.
    const auto& b = base_dir;
    c.output_dir = detail::resolve(b, c.output_dir);
    c.dump = detail::resolve(b, c.dump);
    c.label_dump = c.label_dump.empty() ? c.dump : detail::resolve(b, c.label_dump);
    c.teacher.replay = detail::resolve(b, c.teacher.replay);
    c.teacher.record = detail::resolve(b, c.teacher.record);
    c.embedder.fixture = detail::resolve(b, c.embedder.fixture);
    c.align_reference = detail::resolve(b, c.align_reference);
    for (auto& p : c.align_sources) p = detail::resolve(b, p);
    for (auto& p : c.emerge_dumps) p = detail::resolve(b, p);
    c.scale_reference = detail::resolve(b, c.scale_reference);
    for (auto& p : c.probes) {
        p.sae = detail::resolve(b, p.sae);
        p.concepts = detail::resolve(b, p.concepts);
    }

    // Thresholds and module configs, before any compute.
    detail::in_unit(c.tau, "match.tau");
    detail::in_unit(c.autointerp.f1_threshold, "label.f1_threshold");
    detail::in_unit(c.rule.min_fraction, "emerge.min_fraction");
    if (c.threads == 0) throw ConfigError("emerge.threads must be positive");
    try {
        c.train.validate();
        c.autointerp.validate();
    } catch (const ValidationError& err) {
        throw ConfigError(err.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path + " is not valid JSON");
    for (const auto& o : overrides) detail::apply_override(doc, o);
    return parse_config(doc, std::filesystem::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------

namespace detail {

inline void require_input(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " is not set in the config");
    if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path);
}

inline void require_artifact(const std::filesystem::path& path, const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw ConfigError(path.string() + " is missing; run `featscope " + producer + "` first");
}

inline std::string file_checksum(const std::string& path) { return hex64(fnv1a64(std::span<const std::byte>(read_file_bytes(path)))); }

inline void write_provenance(const RunConfig& cfg, const std::filesystem::path& artifact, const std::string& command,
                             const std::vector<std::string>& inputs) {
    nlohmann::json j = {{"command", command}, {"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"version", kVersion}};
    j["inputs"] = nlohmann::json::object();
    for (const auto& p : inputs) j["inputs"][p] = file_checksum(p);
    j["artifact_checksum"] = file_checksum(artifact.string());
    std::ofstream out(artifact.string() + ".provenance.json", std::ios::binary);
    if (!out) throw IoError("cannot write provenance for " + artifact.string());
    out << j.dump(2) << '\n';
}

inline void prepare_output(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
}

}  // namespace detail

inline std::shared_ptr<Teacher> make_teacher(const RunConfig& cfg, const FiringProfile& profile, std::span<const SampleMeta> meta) {
    std::shared_ptr<Teacher> t;
    if (cfg.teacher.kind == "http") {
        try {
            cfg.teacher.endpoint.validate();
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("teacher: ") + e.what());
        }
        t = std::make_shared<HttpTeacher>(cfg.teacher.endpoint);
    } else if (cfg.teacher.kind == "replay") {
        detail::require_input(cfg.teacher.replay, "teacher.replay");
        t = std::make_shared<ReplayTeacher>(cfg.teacher.replay);
    } else if (cfg.teacher.kind == "perfect") {
        t = std::make_shared<PerfectTeacher>(profile, meta, cfg.autointerp.n_label);
    } else {
        throw ConfigError("unknown teacher kind '" + cfg.teacher.kind + "' (expected http, replay or perfect)");
    }
    if (!cfg.teacher.record.empty()) t = std::make_shared<RecordingTeacher>(t, cfg.teacher.record);
    return t;
}

inline std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg) {
    if (cfg.embedder.kind == "http") {
        try {
            cfg.embedder.endpoint.validate();
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("embedder: ") + e.what());
        }
        return std::make_unique<HttpEmbedder>(cfg.embedder.endpoint);
    }
    if (cfg.embedder.kind == "fixture") {
        detail::require_input(cfg.embedder.fixture, "embedder.fixture");
        return std::make_unique<FixtureEmbedder>(cfg.embedder.fixture);
    }
    if (cfg.embedder.kind == "toy") return std::make_unique<ToyEmbedder>(cfg.embedder.dim);
    throw ConfigError("unknown embedder kind '" + cfg.embedder.kind + "' (expected http, fixture or toy)");
}

// --- subcommands ---------------------------------------------------------------

inline std::string cmd_validate_dump(const std::string& path, std::ostream& log) {
    detail::require_input(path, "dump");
    const auto d = read_dump(path);
    const auto& a = d.matrix.axis();
    log << path << ": N=" << d.matrix.n_samples() << " d=" << d.matrix.dim() << " param_count=" << a.param_count
        << " checkpoint_step=" << a.checkpoint_step << " layer_index=" << a.layer_index << " ok\n";
    return path;
}

inline std::filesystem::path cmd_train(const RunConfig& cfg, std::ostream& log) {
    detail::require_input(cfg.dump, "dump");
    detail::prepare_output(cfg);
    const auto dump = read_dump(cfg.dump);
    const auto result = train(dump.matrix, cfg.train);
    const auto model_path = cfg.out("sae.esae");
    write_checkpoint(result.model, model_path.string());
    const auto trace_path = cfg.out("train_trace.csv");
    {
        std::ofstream out(trace_path, std::ios::binary);
        detail::write_csv_row(out, {"epoch", "loss", "dead_count"});
        for (const auto& e : result.trace)
            detail::write_csv_row(out, {std::to_string(e.epoch), detail::fixed(e.loss, 9), std::to_string(e.dead_count)});
        if (!out) throw IoError("write failed: " + trace_path.string());
    }
    detail::write_provenance(cfg, model_path, "train", {cfg.dump});
    detail::write_provenance(cfg, trace_path, "train", {cfg.dump});
    log << "trained " << result.model.latent_width() << " latents (k=" << result.model.sparsity_k << ") on " << dump.matrix.n_samples()
        << " samples; final loss " << (result.trace.empty() ? 0.0 : result.trace.back().loss) << ", dead "
        << result.stats.dead_count() << "\n";
    return model_path;
}

inline std::filesystem::path cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    detail::require_input(cfg.dump, "dump");
    if (cfg.k_grid.empty() || cfg.h_grid.empty()) throw ConfigError("sweep.k_grid and sweep.h_grid must be non-empty");
    detail::prepare_output(cfg);
    const auto dump = read_dump(cfg.dump);
    const TeacherFactory factory = [&](const FiringProfile& p, std::span<const SampleMeta> m) { return make_teacher(cfg, p, m); };
    const auto rows = sweep_hyperparams(dump.matrix, dump.meta, cfg.k_grid, cfg.h_grid, cfg.train, cfg.autointerp, factory);
    const auto path = cfg.out("sweep.csv");
    std::ofstream out(path, std::ios::binary);
    detail::write_csv_row(out, {"k", "h", "mean_f1", "labeled", "ever_active", "high_fidelity", "error"});
    for (const auto& r : rows)
        detail::write_csv_row(out, {std::to_string(r.k), std::to_string(r.h), std::isnan(r.mean_f1) ? "" : detail::fixed(r.mean_f1, 6),
                                    std::to_string(r.labeled), std::to_string(r.ever_active), std::to_string(r.high_fidelity), r.error});
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
    detail::write_provenance(cfg, path, "sweep", {cfg.dump});
    log << "swept " << rows.size() << " (k, h) points\n";
    return path;
}

inline std::filesystem::path cmd_label(const RunConfig& cfg, std::ostream& log) {
    const auto model_path = cfg.out("sae.esae");
    detail::require_artifact(model_path, "train");
    detail::require_input(cfg.label_dump, "label dump");
    const auto model = read_checkpoint(model_path.string());
    const auto dump = read_dump(cfg.label_dump);
    const auto profile = firing_profile(model, dump.matrix, dump.meta);
    const auto teacher = make_teacher(cfg, profile, dump.meta);
    const auto records = label_neurons(*teacher, profile, dump.meta, cfg.autointerp, cfg.neurons);
    const auto path = cfg.out("records.jsonl");
    write_records(records, path.string());
    detail::write_provenance(cfg, path, "label", {model_path.string(), cfg.label_dump});
    std::size_t labeled = 0, failed = 0;
    for (const auto& r : records) {
        labeled += r.labeled();
        failed += r.status == NeuronStatus::teacher_failure;
    }
    log << "labeled " << labeled << " of " << records.size() << " neurons; " << high_fidelity_pool(records, cfg.autointerp.f1_threshold).size()
        << " above F1 " << cfg.autointerp.f1_threshold << "; " << failed << " teacher failures\n";
    return path;
}

inline std::filesystem::path cmd_match(const RunConfig& cfg, std::vector<std::string> queries, std::ostream& log) {
    const auto rec_path = cfg.out("records.jsonl");
    detail::require_artifact(rec_path, "label");
    if (queries.empty()) queries = cfg.queries;
    if (queries.empty()) throw ConfigError("no queries: pass them on the command line or set match.queries");
    const auto records = read_records(rec_path.string());
    auto embedder = make_embedder(cfg);
    const auto build = build_label_db(records, *embedder, cfg.autointerp.f1_threshold);
    for (const auto& f : build.failures) log << "warning: neuron " << f.neuron_id << " label not embedded: " << f.error << "\n";
    std::vector<ConceptSet> sets;
    for (const auto& q : queries) {
        try {
            sets.push_back(match_concepts(q, build.db, *embedder, cfg.tau));
        } catch (const EndpointError& e) {
            log << "warning: query '" << q << "' not embedded: " << e.what() << "\n";
        }
    }
    const auto path = cfg.out("concepts.csv");
    write_concept_table(sets, path.string());
    std::vector<std::string> inputs{rec_path.string()};
    if (cfg.embedder.kind == "fixture") inputs.push_back(cfg.embedder.fixture);
    detail::write_provenance(cfg, path, "match", inputs);
    for (const auto& s : sets) log << s.query << ": " << s.matches.size() << " neurons\n";
    return path;
}

inline std::filesystem::path cmd_align(const RunConfig& cfg, std::ostream& log) {
    detail::require_input(cfg.align_reference, "align.reference");
    if (cfg.align_sources.empty()) throw ConfigError("align.sources is empty");
    for (const auto& s : cfg.align_sources) detail::require_input(s, "align source");
    detail::prepare_output(cfg);
    std::filesystem::create_directories(cfg.out("alignment"));
    const auto ref = read_dump(cfg.align_reference);
    const auto table = cfg.out("alignment.csv");
    std::ofstream out(table, std::ios::binary);
    detail::write_csv_row(out, {"source", "param_count", "d_m", "d_ref", "residual", "cka", "cos_corr", "error"});
    for (const auto& src_path : cfg.align_sources) {
        const auto name = std::filesystem::path(src_path).stem().string();
        try {
            const auto src = read_dump(src_path);
            const auto r = procrustes_align(src.matrix, ref.matrix, cfg.align_center);
            const auto w_path = cfg.out("alignment") / (name + ".esad");
            write_alignment(r, w_path.string());
            detail::write_provenance(cfg, w_path, "align", {src_path, cfg.align_reference});
            detail::write_csv_row(out, {name, std::to_string(src.matrix.axis().param_count), std::to_string(src.matrix.dim()),
                                        std::to_string(ref.matrix.dim()), detail::fixed(r.residual, 9), detail::fixed(r.cka, 9),
                                        detail::fixed(r.cos_corr, 9), ""});
            log << name << ": cka " << r.cka << ", cos_corr " << r.cos_corr << "\n";
        } catch (const Error& e) {
            detail::write_csv_row(out, {name, "", "", "", "", "", "", e.what()});
            log << "warning: " << name << ": " << e.what() << "\n";
        }
    }
    out.close();
    if (!out) throw IoError("write failed: " + table.string());
    std::vector<std::string> inputs = cfg.align_sources;
    inputs.push_back(cfg.align_reference);
    detail::write_provenance(cfg, table, "align", inputs);
    return table;
}

inline ConceptCatalog load_catalog(const std::string& concepts_path, const std::string& records_path, GlobalMode mode, double f1_threshold) {
    const auto sets = read_concept_table(concepts_path);
    std::vector<Index> labeled;
    if (mode == GlobalMode::all_labeled) labeled = high_fidelity_pool(read_records(records_path), f1_threshold);
    return ConceptCatalog::from_sets(sets, "concepts-" + detail::file_checksum(concepts_path), labeled, mode);
}

inline std::filesystem::path cmd_emerge(const RunConfig& cfg, std::ostream& log) {
    const auto model_path = cfg.out("sae.esae");
    const auto concepts_path = cfg.out("concepts.csv");
    const auto records_path = cfg.out("records.jsonl");
    detail::require_artifact(model_path, "train");
    detail::require_artifact(concepts_path, "match");
    if (cfg.global_mode == GlobalMode::all_labeled) detail::require_artifact(records_path, "label");
    if (cfg.emerge_dumps.empty()) throw ConfigError("emerge.dumps is empty");
    for (const auto& p : cfg.emerge_dumps) detail::require_input(p, "emerge dump");
    if (!cfg.scale_reference.empty()) detail::require_input(cfg.scale_reference, "emerge.reference");

    const auto model = read_checkpoint(model_path.string());
    const auto catalog = load_catalog(concepts_path.string(), records_path.string(), cfg.global_mode, cfg.autointerp.f1_threshold);
    std::vector<ActivationMatrix> dumps;
    for (const auto& p : cfg.emerge_dumps) dumps.push_back(read_dump(p).matrix);
    if (cfg.axis == Axis::scale && !cfg.scale_reference.empty())
        dumps = align_for_scale_axis(dumps, read_dump(cfg.scale_reference).matrix, cfg.align_center);

    const auto curve = emergence_sweep(cfg.axis, dumps, model, catalog, cfg.rule, cfg.threads);
    const auto path = cfg.out("curve_" + to_string(cfg.axis) + ".csv");
    write_curve_csv(curve, path.string());
    std::vector<std::string> inputs{model_path.string(), concepts_path.string()};
    inputs.insert(inputs.end(), cfg.emerge_dumps.begin(), cfg.emerge_dumps.end());
    detail::write_provenance(cfg, path, "emerge", inputs);
    for (const auto& p : curve.points) {
        if (p.rates) log << to_string(cfg.axis) << " " << p.coordinate << ": " << detail::fixed(p.rates->global.percent(), 1) << "%\n";
        else log << to_string(cfg.axis) << " " << p.coordinate << ": gap (" << p.error << ")\n";
    }

    if (!cfg.probes.empty()) {
        std::vector<Probe> probes;
        for (const auto& ps : cfg.probes) {
            detail::require_input(ps.sae, "probe sae");
            detail::require_input(ps.concepts, "probe concepts");
            probes.push_back({ps.layer, read_checkpoint(ps.sae), load_catalog(ps.concepts, "", GlobalMode::union_of_subjects, 0.0)});
        }
        const auto grid = spatial_probe(probes, dumps, cfg.rule, cfg.threads);
        const auto grid_path = cfg.out("grid.csv");
        std::ofstream out(grid_path, std::ios::binary);
        write_grid_csv(grid, out);
        out.close();
        if (!out) throw IoError("write failed: " + grid_path.string());
        detail::write_provenance(cfg, grid_path, "emerge", cfg.emerge_dumps);
        const auto pct = grid.global_percent();
        for (std::size_t r = 0; r < pct.size(); ++r)
            if (const auto sig = detect_reemergence(pct[r]); sig.present)
                log << "probe layer " << grid.probe_layers[r] << ": re-emergence, hidden at layer " << grid.data_layers[sig.hidden]
                    << ", back at layer " << grid.data_layers[sig.late] << "\n";
    }
    return path;
}

}  // namespace featscope
