// Toy study: plant eight directions in a 16-d space, recover them with a top-k SAE, label the
// latents with a mock teacher, select concept sets and chart when they switch on over checkpoints.

#include <cstdio>
#include <random>

#include "featscope/emergence.hpp"
#include "featscope/eyesee.hpp"

using namespace featscope;

int main() {
    const std::size_t n = 4000, d = 16, atoms = 8;
    std::mt19937_64 rng(5);
    std::normal_distribution<float> normal;
    std::uniform_real_distribution<float> amp(0.5f, 2.0f);
    std::uniform_int_distribution<std::size_t> pick(0, atoms - 1);

    Eigen::MatrixXf dict(atoms, d);
    for (Eigen::Index i = 0; i < dict.size(); ++i) dict.data()[i] = normal(rng);
    dict.rowwise().normalize();

    std::vector<float> values(n * d);
    std::vector<SampleMeta> meta(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = pick(rng);
        const float s = amp(rng);
        for (std::size_t c = 0; c < d; ++c) values[i * d + c] = s * dict(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
        meta[i].sample_id = "s" + std::to_string(i);
        meta[i].text = "sample " + std::to_string(i);
        meta[i].subject = "atom" + std::to_string(a);
    }
    const ActivationMatrix data(n, d, values, AxisCoord{1'000'000'000, 143000, 8});

    TrainConfig cfg;
    cfg.sparsity_k = 1;
    cfg.latent_width = 32;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-2;
    cfg.seed = 1;
    const auto trained = train(data, cfg);
    std::printf("trained: loss %.4f, %zu of %zu latents fired\n", trained.trace.back().loss, trained.stats.ever_active_count(),
                cfg.latent_width);

    const auto profile = firing_profile(trained.model, data, meta);
    AutoInterpConfig ai;
    PerfectTeacher teacher(profile, meta, ai.n_label);
    const auto records = label_neurons(teacher, profile, meta, ai);
    ToyEmbedder embedder;
    const auto db = build_label_db(records, embedder).db;
    std::printf("labeled: %zu neurons above F1 %.1f\n", db.entries.size(), ai.f1_threshold);

    std::vector<ConceptSet> sets;
    for (std::size_t e = 0; e < std::min<std::size_t>(3, db.entries.size()); ++e) {
        sets.push_back(match_concepts(db.entries[e].label, db, embedder, 0.9));
        std::printf("query \"%s\" -> %zu neuron(s)\n", sets.back().query.c_str(), sets.back().matches.size());
    }
    const auto catalog = ConceptCatalog::from_sets(sets, "toy");

    std::vector<ActivationMatrix> checkpoints;
    for (std::uint64_t step : checkpoint_schedule()) {
        AxisCoord axis{1'000'000'000, step, 8};
        if (step < 10000) checkpoints.push_back(ActivationMatrix(n, d, std::vector<float>(n * d, 0.0f), axis));
        else checkpoints.push_back(data.with_axis(axis));
    }
    const auto curve = emergence_sweep(Axis::time, checkpoints, trained.model, catalog);
    for (const auto& p : curve.points)
        std::printf("step %6llu  %5.1f%%\n", static_cast<unsigned long long>(p.coordinate), p.rates->global.percent());
}
