// Builds the offline EyeSee fixture from a concept catalogue CSV
// (subject,neuron_id,label,cosine,f1).
//
// Every subject q gets a basis direction e_q and every neuron j a private direction f_j.
// A label vector is sum_q s_jq e_q + sqrt(1 - sum_q s_jq^2) f_j, where s_jq is the catalogue
// cosine (0 when the pair is not listed), and a subject query embeds to e_q. Cosines between
// queries and labels therefore equal the catalogue values, and unlisted pairs score 0.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "featscope/autointerp.hpp"
#include "featscope/detail/csv.hpp"
#include "featscope/embedder.hpp"

using namespace featscope;

namespace {

struct Row {
    std::string subject;
    Index neuron = 0;
    std::string label;
    double cosine = 0;
    double f1 = 0;
};

std::vector<Row> read_catalogue(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto rows = detail::read_csv(in);
    std::vector<Row> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 5) throw FormatError(path + ": bad row " + std::to_string(r + 1));
        out.push_back({rows[r][0], std::stoull(rows[r][1]), rows[r][2], std::stod(rows[r][3]), std::stod(rows[r][4])});
    }
    return out;
}

/// A verification outcome over 5 + 5 samples whose F1 rounds to the catalogue value.
NeuronRecord record_for(Index neuron, const std::string& label, double f1) {
    NeuronRecord r;
    r.neuron_id = neuron;
    r.label = label;
    for (int i = 0; i < 10; ++i) {
        r.sample_ids.push_back("fixture-" + std::to_string(neuron) + "-" + std::to_string(i));
        r.truth.push_back(i < 5);
        r.predictions.push_back(i < 5);
        r.flagged.push_back(false);
    }
    if (f1 < 0.995) {
        if (std::abs(f1 - 0.91) > 0.005) throw ValidationError("no verification pattern for F1 " + std::to_string(f1));
        r.predictions[5] = true;  // TP 5, FP 1: F1 = 10/11
    }
    const auto m = classifier_metrics(r.predictions, r.truth);
    r.accuracy = m.accuracy;
    r.precision = m.precision;
    r.recall = m.recall;
    r.f1 = m.f1;
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build the EyeSee embedding and record fixtures from a concept catalogue"};
    std::string catalogue, embeddings, records;
    app.add_option("--catalogue", catalogue, "catalogue CSV")->required()->check(CLI::ExistingFile);
    app.add_option("--embeddings", embeddings, "output embedding fixture (JSONL)")->required();
    app.add_option("--records", records, "output neuron records (JSONL)")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto rows = read_catalogue(catalogue);
        std::vector<std::string> subjects;
        std::map<Index, std::pair<std::string, double>> neurons;
        std::map<Index, std::map<std::size_t, double>> sims;
        for (const auto& r : rows) {
            auto q = std::find(subjects.begin(), subjects.end(), r.subject) - subjects.begin();
            if (q == static_cast<std::ptrdiff_t>(subjects.size())) subjects.push_back(r.subject);
            auto [it, fresh] = neurons.emplace(r.neuron, std::make_pair(r.label, r.f1));
            if (!fresh && (it->second.first != r.label || it->second.second != r.f1))
                throw ValidationError("neuron " + std::to_string(r.neuron) + " has inconsistent catalogue rows");
            if (!sims[r.neuron].emplace(static_cast<std::size_t>(q), r.cosine).second)
                throw ValidationError("duplicate pair " + r.subject + "/" + std::to_string(r.neuron));
        }

        const auto dim = static_cast<Eigen::Index>(subjects.size() + neurons.size());
        std::vector<EmbeddingRecord> fixture;
        for (std::size_t q = 0; q < subjects.size(); ++q) {
            Embedding e = Embedding::Zero(dim);
            e(static_cast<Eigen::Index>(q)) = 1.0;
            fixture.push_back({subjects[q], e});
        }
        std::set<std::string> seen;
        std::vector<NeuronRecord> recs;
        Eigen::Index own = static_cast<Eigen::Index>(subjects.size());
        for (const auto& [id, info] : neurons) {
            Embedding v = Embedding::Zero(dim);
            double used = 0.0;
            for (const auto& [q, s] : sims[id]) {
                v(static_cast<Eigen::Index>(q)) = s;
                used += s * s;
            }
            if (used > 1.0) throw ValidationError("neuron " + std::to_string(id) + " cannot be embedded: sum s^2 > 1");
            v(own++) = std::sqrt(1.0 - used);
            if (!seen.insert(info.first).second) throw ValidationError("label shared by two neurons: " + info.first);
            fixture.push_back({info.first, v});
            recs.push_back(record_for(id, info.first, info.second));
        }
        write_embedding_fixture(fixture, embeddings);
        write_records(recs, records);
        std::cout << subjects.size() << " subjects, " << neurons.size() << " neurons, dim " << dim << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
