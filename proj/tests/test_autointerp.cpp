#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "featscope/autointerp.hpp"
#include "oracles.hpp"

using namespace featscope;

namespace {

std::vector<bool> bits(std::initializer_list<int> v) {
    std::vector<bool> out;
    for (int b : v) out.push_back(b != 0);
    return out;
}

/// Neuron 0 fires on samples [0, n_fire) with activation n_fire - i; neuron 1 never fires.
FiringProfile synthetic_profile(std::size_t n_samples, std::size_t n_fire) {
    FiringProfile p;
    for (std::size_t i = 0; i < n_samples; ++i) p.sample_ids.push_back("s" + std::to_string(i));
    p.neurons.resize(2);
    for (std::size_t i = 0; i < n_fire; ++i) p.neurons[0].push_back({i, static_cast<float>(n_fire - i)});
    return p;
}

ExamplePools tiny_pools() {
    ExamplePools p;
    p.neuron_id = 3;
    p.label_pool = {{0, "a", "alpha", 2.0f}};
    for (int i = 0; i < 5; ++i) p.verify_pos.push_back({static_cast<Index>(10 + i), "p" + std::to_string(i), "pos " + std::to_string(i), 1.0f});
    for (int i = 0; i < 5; ++i) p.verify_neg.push_back({static_cast<Index>(20 + i), "n" + std::to_string(i), "neg " + std::to_string(i), 0.0f});
    return p;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TrainedToy {
    oracle::PlantedDictionary planted;
    std::vector<SampleMeta> meta;
    SaeModel model;
    FiringProfile profile;
};

TrainedToy trained_toy(std::uint64_t seed) {
    TrainedToy t{oracle::make_planted(400, 8, 4, seed), oracle::make_meta(400), {}, {}};
    TrainConfig cfg;
    cfg.latent_width = 8;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.seed = seed;
    t.model = train(t.planted.data, cfg).model;
    t.profile = firing_profile(t.model, t.planted.data, t.meta);
    return t;
}

}  // namespace

// --- classifier_metrics -----------------------------------------------------

TEST(ClassifierMetrics, PerfectClassifier) {
    const auto m = classifier_metrics(bits({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}), bits({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(ClassifierMetrics, HandCountedConfusion) {
    // TP=4, FN=1, FP=1, TN=4
    const auto m = classifier_metrics(bits({1, 1, 1, 1, 0, 1, 0, 0, 0, 0}), bits({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
    EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
    EXPECT_DOUBLE_EQ(m.precision, 0.8);
    EXPECT_DOUBLE_EQ(m.recall, 0.8);
    EXPECT_DOUBLE_EQ(m.f1, 0.8);
}

TEST(ClassifierMetrics, AllNegativePredictions) {
    const auto m = classifier_metrics(std::vector<bool>(10, false), bits({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.f1, 0.0);
    EXPECT_EQ(m.accuracy, 0.5);
}

TEST(ClassifierMetrics, Errors) {
    EXPECT_THROW(classifier_metrics(bits({1}), bits({1, 0})), DimensionError);
    EXPECT_THROW(classifier_metrics({}, {}), ValidationError);
}

TEST(ClassifierMetrics, MatchesBruteForceConfusion) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> len(1, 40);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<bool> pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            pred[static_cast<std::size_t>(i)] = coin(rng);
            truth[static_cast<std::size_t>(i)] = coin(rng);
        }
        const auto c = oracle::count_confusion(pred, truth);
        const auto m = classifier_metrics(pred, truth);
        ASSERT_EQ(m.tp, static_cast<std::size_t>(c.tp));
        ASSERT_EQ(m.fp, static_cast<std::size_t>(c.fp));
        ASSERT_EQ(m.tn, static_cast<std::size_t>(c.tn));
        ASSERT_EQ(m.fn, static_cast<std::size_t>(c.fn));
        const double p = c.tp + c.fp ? double(c.tp) / (c.tp + c.fp) : 0.0;
        const double r = c.tp + c.fn ? double(c.tp) / (c.tp + c.fn) : 0.0;
        EXPECT_EQ(m.accuracy, double(c.tp + c.tn) / n);
        EXPECT_EQ(m.precision, p);
        EXPECT_EQ(m.recall, r);
        EXPECT_EQ(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0);
        for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

// --- high-fidelity pool -----------------------------------------------------

TEST(HighFidelityPool, StrictThreshold) {
    std::vector<NeuronRecord> recs(3);
    recs[0].neuron_id = 7;
    recs[0].f1 = 1.0;
    recs[1].neuron_id = 2;
    recs[1].f1 = 0.91;
    recs[2].neuron_id = 5;
    recs[2].f1 = 0.89;
    EXPECT_EQ(high_fidelity_pool(recs, 0.9), (std::vector<Index>{2, 7}));
    EXPECT_EQ(high_fidelity_pool(recs, 0.0), (std::vector<Index>{2, 5, 7}));
    EXPECT_TRUE(high_fidelity_pool(recs, 1.0).empty());
    recs[1].f1 = 0.9;
    EXPECT_EQ(high_fidelity_pool(recs, 0.9), (std::vector<Index>{7}));
    EXPECT_THROW(high_fidelity_pool(recs, 1.5), ValidationError);
}

TEST(HighFidelityPool, SkipsUnlabeled) {
    std::vector<NeuronRecord> recs(2);
    recs[0].neuron_id = 0;
    recs[0].f1 = 1.0;
    recs[1].neuron_id = 1;
    recs[1].f1 = 1.0;
    recs[1].status = NeuronStatus::teacher_failure;
    EXPECT_EQ(high_fidelity_pool(recs, 0.5), std::vector<Index>{0});
}

// --- pools ------------------------------------------------------------------

TEST(BuildPools, ForcedPartition) {
    const auto profile = synthetic_profile(40, 15);
    const auto meta = oracle::make_meta(40);
    const auto pools = build_pools(profile, meta, 0, 10, 5, 1);
    std::set<Index> both;
    for (const auto& s : pools.label_pool) both.insert(s.sample);
    for (const auto& s : pools.verify_pos) both.insert(s.sample);
    EXPECT_EQ(both.size(), 15u);
    EXPECT_EQ(*both.rbegin(), 14u);
    for (const auto& s : pools.verify_neg) EXPECT_GE(s.sample, 15u);
}

TEST(BuildPools, InsufficientExamples) {
    const auto meta = oracle::make_meta(40);
    EXPECT_THROW(build_pools(synthetic_profile(40, 3), meta, 0, 10, 5, 1), InsufficientExamples);
    EXPECT_THROW(build_pools(synthetic_profile(40, 3), meta, 1, 10, 5, 1), InsufficientExamples);
    // Fires on 37 of 40: only 3 non-firing samples for n_verify = 5.
    EXPECT_THROW(build_pools(synthetic_profile(40, 37), meta, 0, 10, 5, 1), InsufficientExamples);
}

TEST(BuildPools, LabelPoolIsTopActivationsAndDeterministic) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> act(0.1f, 1.0f);
    std::bernoulli_distribution fires(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        FiringProfile p;
        const std::size_t n = 80;
        const auto meta = oracle::make_meta(n, "id");
        for (const auto& m : meta) p.sample_ids.push_back(m.sample_id);
        p.neurons.resize(3);
        for (auto& neuron : p.neurons)
            for (std::size_t i = 0; i < n; ++i)
                if (fires(rng)) neuron.push_back({i, trial % 5 == 0 ? 0.5f : act(rng)});
        for (Index j = 0; j < 3; ++j) {
            if (p.neurons[j].size() < 15 || n - p.neurons[j].size() < 5) continue;
            const auto pools = build_pools(p, meta, j, 10, 5, 123);
            // Oracle: full sort by (activation desc, sample_id asc).
            auto all = p.neurons[j];
            std::sort(all.begin(), all.end(), [&](const Firing& a, const Firing& b) {
                return a.activation != b.activation ? a.activation > b.activation
                                                    : meta[a.sample].sample_id < meta[b.sample].sample_id;
            });
            for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(pools.label_pool[r].sample, all[r].sample);

            std::set<std::string> ids;
            std::set<Index> firing;
            for (const auto& f : p.neurons[j]) firing.insert(f.sample);
            for (const auto* part : {&pools.label_pool, &pools.verify_pos, &pools.verify_neg})
                for (const auto& s : *part) EXPECT_TRUE(ids.insert(s.sample_id).second) << "duplicate " << s.sample_id;
            EXPECT_EQ(pools.verify_pos.size(), 5u);
            EXPECT_EQ(pools.verify_neg.size(), 5u);
            for (const auto& s : pools.verify_pos) EXPECT_TRUE(firing.count(s.sample));
            for (const auto& s : pools.verify_neg) EXPECT_FALSE(firing.count(s.sample));

            const auto again = build_pools(p, meta, j, 10, 5, 123);
            for (std::size_t r = 0; r < 5; ++r) {
                EXPECT_EQ(again.verify_pos[r].sample, pools.verify_pos[r].sample);
                EXPECT_EQ(again.verify_neg[r].sample, pools.verify_neg[r].sample);
            }
        }
    }
}

// --- prompts and replies ----------------------------------------------------

TEST(GenerateLabel, EchoMock) {
    FunctionTeacher echo([](const std::string&) { return std::string("concept-X"); });
    EXPECT_EQ(generate_label(echo, tiny_pools()), "concept-X");
}

TEST(GenerateLabel, WhitespaceIsEmptyLabel) {
    FunctionTeacher blank([](const std::string&) { return std::string(" \n\t "); });
    EXPECT_THROW(generate_label(blank, tiny_pools()), EmptyLabel);
}

TEST(GenerateLabel, PromptMatchesGoldenFile) {
    ExamplePools pools;
    const char* texts[] = {"The derivative of x^2 is 2x.",
                           "Solve for y: 3y + 4 = 10",
                           "A prime has exactly two divisors.",
                           "She said \"integrate by parts\".",
                           "line one\nline two",
                           "Euler's identity links e, i and pi.",
                           "tab\there",
                           "The sum of angles in a triangle is 180\xc2\xb0.",
                           "back\\slash",
                           "Matrices multiply row by column."};
    for (std::size_t i = 0; i < 10; ++i) pools.label_pool.push_back({i, "g" + std::to_string(i), texts[i], 1.0f});
    std::string sent;
    FunctionTeacher capture([&](const std::string& prompt) {
        sent = prompt;
        return std::string("calculus");
    });
    generate_label(capture, pools);
    EXPECT_EQ(sent, read_text(std::string(FEATSCOPE_TEST_DATA) + "/golden_label_prompt.txt"));
}

TEST(ParseYesNo, PrefixRules) {
    EXPECT_TRUE(parse_yes_no("yes").yes);
    EXPECT_TRUE(parse_yes_no("  YES.").yes);
    EXPECT_TRUE(parse_yes_no("Yes, it applies").yes);
    EXPECT_FALSE(parse_yes_no("yes").flagged);
    EXPECT_FALSE(parse_yes_no("No").yes);
    EXPECT_FALSE(parse_yes_no("no!").flagged);
    for (const char* odd : {"", "maybe", "Not sure", "Nope", "yesterday", "I think yes"}) {
        EXPECT_FALSE(parse_yes_no(odd).yes) << odd;
        EXPECT_TRUE(parse_yes_no(odd).flagged) << odd;
    }
}

// --- verification -----------------------------------------------------------

TEST(VerifyLabel, MockAnswers) {
    const auto pools = tiny_pools();
    FunctionTeacher oracle_teacher([](const std::string& p) { return std::string(p.find("\"pos ") != std::string::npos ? "yes" : "no"); });
    auto rec = verify_label(oracle_teacher, "concept", pools);
    EXPECT_EQ(rec.accuracy, 1.0);
    EXPECT_EQ(rec.precision, 1.0);
    EXPECT_EQ(rec.recall, 1.0);
    EXPECT_EQ(rec.f1, 1.0);
    EXPECT_EQ(rec.predictions.size(), 10u);

    FunctionTeacher always_yes([](const std::string&) { return std::string("Yes"); });
    rec = verify_label(always_yes, "concept", pools);
    EXPECT_DOUBLE_EQ(rec.precision, 0.5);
    EXPECT_DOUBLE_EQ(rec.recall, 1.0);
    EXPECT_DOUBLE_EQ(rec.f1, 2.0 / 3.0);

    FunctionTeacher always_no([](const std::string&) { return std::string("no"); });
    rec = verify_label(always_no, "concept", pools);
    EXPECT_EQ(rec.recall, 0.0);
    EXPECT_EQ(rec.f1, 0.0);

    FunctionTeacher rambling([](const std::string&) { return std::string("It depends."); });
    rec = verify_label(rambling, "concept", pools);
    EXPECT_EQ(std::count(rec.flagged.begin(), rec.flagged.end(), true), 10);
    EXPECT_EQ(std::count(rec.predictions.begin(), rec.predictions.end(), true), 0);

    EXPECT_THROW(verify_label(always_yes, "  ", pools), ValidationError);
}

TEST(VerifyLabel, F1Identity) {
    std::mt19937_64 rng(3);
    std::bernoulli_distribution coin(0.6);
    const auto pools = tiny_pools();
    for (int trial = 0; trial < 100; ++trial) {
        FunctionTeacher noisy([&](const std::string&) { return std::string(coin(rng) ? "yes" : "no"); });
        const auto rec = verify_label(noisy, "x", pools);
        if (rec.precision + rec.recall > 0)
            EXPECT_NEAR(rec.f1, 2 * rec.precision * rec.recall / (rec.precision + rec.recall), 1e-15);
        else
            EXPECT_EQ(rec.f1, 0.0);
    }
}

// --- full loop --------------------------------------------------------------

TEST(LabelNeurons, PerfectTeacherScoresEveryProcessedNeuron) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto toy = trained_toy(seed);
        PerfectTeacher teacher(toy.profile, toy.meta, 10);
        AutoInterpConfig cfg;
        const auto records = label_neurons(teacher, toy.profile, toy.meta, cfg);
        ASSERT_EQ(records.size(), 8u);
        std::size_t labeled = 0;
        for (std::size_t j = 0; j < records.size(); ++j) {
            EXPECT_EQ(records[j].neuron_id, j);
            if (!records[j].labeled()) {
                EXPECT_EQ(records[j].status, NeuronStatus::insufficient_examples);
                continue;
            }
            ++labeled;
            EXPECT_EQ(records[j].label, "concept-" + std::to_string(j));
            EXPECT_EQ(records[j].f1, 1.0);
        }
        EXPECT_GE(labeled, 4u);
        EXPECT_EQ(high_fidelity_pool(records, 0.9).size(), labeled);
    }
}

TEST(LabelNeurons, ConcurrentRunMatchesSerial) {
    const auto toy = trained_toy(4);
    PerfectTeacher teacher(toy.profile, toy.meta, 10);
    AutoInterpConfig cfg;
    const auto serial = label_neurons(teacher, toy.profile, toy.meta, cfg);
    cfg.threads = 4;
    EXPECT_EQ(label_neurons(teacher, toy.profile, toy.meta, cfg), serial);
}

TEST(LabelNeurons, FailuresAreRecordedNotThrown) {
    const auto toy = trained_toy(5);
    FunctionTeacher down([](const std::string&) -> std::string { throw EndpointError("connection refused"); });
    const auto records = label_neurons(down, toy.profile, toy.meta, AutoInterpConfig{});
    for (const auto& r : records) {
        EXPECT_FALSE(r.labeled());
        EXPECT_FALSE(r.error.empty());
    }
    FunctionTeacher blank([](const std::string&) { return std::string(""); });
    bool saw_empty = false;
    for (const auto& r : label_neurons(blank, toy.profile, toy.meta, AutoInterpConfig{}))
        saw_empty |= r.status == NeuronStatus::empty_label;
    EXPECT_TRUE(saw_empty);
}

// --- records ----------------------------------------------------------------

TEST(NeuronRecords, JsonlRoundTrip) {
    const auto toy = trained_toy(6);
    PerfectTeacher teacher(toy.profile, toy.meta, 10);
    auto records = label_neurons(teacher, toy.profile, toy.meta, AutoInterpConfig{});
    records[0].label = "quote \" and newline\n and \xc3\xa9";
    const auto path = (oracle::scratch_dir("records") / "records.jsonl").string();
    write_records(records, path);
    EXPECT_EQ(read_records(path), records);
    std::ofstream(path) << "{\"neuron_id\": 1}\n";
    EXPECT_THROW(read_records(path), FormatError);
    EXPECT_THROW(read_records("/nonexistent/records.jsonl"), IoError);
}

// --- transcripts ------------------------------------------------------------

TEST(Transcripts, RecordThenReplay) {
    const auto path = (oracle::scratch_dir("transcript") / "t.jsonl").string();
    const auto toy = trained_toy(7);
    auto perfect = std::make_shared<PerfectTeacher>(toy.profile, toy.meta, 10);
    std::vector<NeuronRecord> live;
    {
        RecordingTeacher recorder(perfect, path);
        live = label_neurons(recorder, toy.profile, toy.meta, AutoInterpConfig{});
    }
    ReplayTeacher replay(path);
    EXPECT_GT(replay.size(), 0u);
    EXPECT_EQ(label_neurons(replay, toy.profile, toy.meta, AutoInterpConfig{}), live);
    EXPECT_THROW(replay.complete("never asked"), EndpointError);
}

// --- HTTP teacher -----------------------------------------------------------

namespace {

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    TeacherEndpoint endpoint(int retries) const {
        TeacherEndpoint ep;
        ep.base_url = "http://127.0.0.1:" + std::to_string(port);
        ep.model = "mock-teacher";
        ep.retry_budget = retries;
        ep.backoff_initial_s = 0.001;
        ep.rate_limit_rps = 1000;
        ep.timeout_s = 5;
        return ep;
    }
};

}  // namespace

TEST(HttpTeacher, RequestContract) {
    LocalServer srv;
    nlohmann::json seen;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Yes"}}]})", "application/json");
    });
    srv.start();
    HttpTeacher teacher(srv.endpoint(0));
    EXPECT_EQ(teacher.complete("hello"), "Yes");
    EXPECT_EQ(seen["model"], "mock-teacher");
    EXPECT_EQ(seen["temperature"], 0);
    ASSERT_EQ(seen["messages"].size(), 1u);
    EXPECT_EQ(seen["messages"][0]["role"], "user");
    EXPECT_EQ(seen["messages"][0]["content"], "hello");
}

TEST(HttpTeacher, RetriesThenSucceeds) {
    LocalServer srv;
    std::atomic<int> calls{0};
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls <= 2) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"label"}}]})", "application/json");
    });
    srv.start();
    HttpTeacher teacher(srv.endpoint(3));
    EXPECT_EQ(teacher.complete("x"), "label");
    EXPECT_EQ(calls.load(), 3);
}

TEST(HttpTeacher, GivesUpAfterRetryBudget) {
    LocalServer srv;
    std::atomic<int> calls{0};
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
    });
    srv.start();
    HttpTeacher teacher(srv.endpoint(3));
    EXPECT_THROW(teacher.complete("x"), EndpointError);
    EXPECT_EQ(calls.load(), 4);
}

TEST(HttpTeacher, MalformedReplyAndPathPrefix) {
    LocalServer srv;
    srv.server.Post("/api/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"unexpected": true})", "application/json");
    });
    srv.start();
    auto ep = srv.endpoint(0);
    ep.base_url += "/api/";
    HttpTeacher teacher(ep);
    EXPECT_THROW(teacher.complete("x"), EndpointError);
}

TEST(HttpTeacher, UnreachableHostFailsAsEndpointError) {
    TeacherEndpoint ep;
    ep.base_url = "http://127.0.0.1:1";
    ep.retry_budget = 1;
    ep.backoff_initial_s = 0.0;
    ep.timeout_s = 1;
    HttpTeacher teacher(ep);
    EXPECT_THROW(teacher.complete("x"), EndpointError);
}

TEST(HttpTeacher, EndpointValidation) {
    TeacherEndpoint ep;
    ep.base_url = "http://localhost";
    ep.retry_budget = -1;
    EXPECT_THROW(HttpTeacher{ep}, ValidationError);
    ep.retry_budget = 0;
    ep.rate_limit_rps = 0;
    EXPECT_THROW(HttpTeacher{ep}, ValidationError);
    ep.rate_limit_rps = 1;
    ep.base_url = "localhost:80";
    HttpTeacher no_scheme(ep);
    EXPECT_THROW(no_scheme.complete("x"), ValidationError);
}

// --- sweep ------------------------------------------------------------------

TEST(Sweep, PerfectTeacherSinglePoint) {
    const auto planted = oracle::make_planted(600, 8, 4, 9);
    const auto meta = oracle::make_meta(600);
    TrainConfig base;
    base.epochs = 4;
    base.batch_size = 32;
    const std::size_t k[] = {1}, h[] = {32};
    auto factory = [](const FiringProfile& p, std::span<const SampleMeta> m) {
        return std::make_shared<PerfectTeacher>(p, m, 10);
    };
    const auto rows = sweep_hyperparams(planted.data, meta, k, h, base, AutoInterpConfig{}, factory);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0].error.empty()) << rows[0].error;
    EXPECT_GT(rows[0].labeled, 0u);
    EXPECT_EQ(rows[0].mean_f1, 1.0);
    EXPECT_EQ(rows[0].high_fidelity, rows[0].labeled);
    EXPECT_GT(rows[0].ever_active, 0u);
}

TEST(Sweep, DeterministicRowsAndRecordedErrors) {
    const auto planted = oracle::make_planted(300, 6, 3, 10);
    const auto meta = oracle::make_meta(300);
    TrainConfig base;
    base.epochs = 2;
    base.batch_size = 32;
    const std::size_t k[] = {1, 1, 16}, h[] = {8};
    auto factory = [](const FiringProfile& p, std::span<const SampleMeta> m) {
        return std::make_shared<PerfectTeacher>(p, m, 10);
    };
    const auto rows = sweep_hyperparams(planted.data, meta, k, h, base, AutoInterpConfig{}, factory);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].labeled, rows[1].labeled);
    EXPECT_EQ(rows[0].ever_active, rows[1].ever_active);
    EXPECT_EQ(rows[0].mean_f1, rows[1].mean_f1);
    EXPECT_FALSE(rows[2].error.empty());
    EXPECT_THROW(sweep_hyperparams(planted.data, meta, std::span<const std::size_t>{}, h, base, AutoInterpConfig{}, factory),
                 ValidationError);
}
