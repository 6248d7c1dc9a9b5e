// featscope: train SAEs on activation dumps, label and match their neurons, and chart
// concept emergence. Exit codes: 0 ok, 1 compute error, 2 usage or configuration error.

#include <iostream>

#include <CLI11.hpp>

#include "featscope/pipeline.hpp"

using namespace featscope;

int main(int argc, char** argv) {
    CLI::App app{"Sparse-autoencoder feature analysis across training time, depth and scale"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override a config value, e.g. --set train.epochs=4 (repeatable)");
        sub->add_option("-o,--output-dir", output_dir, "override output_dir");
        sub->add_option("--seed", seed, "override the run seed");
    };

    auto* train_cmd = app.add_subcommand("train", "train an SAE on the configured dump");
    auto* sweep_cmd = app.add_subcommand("sweep", "train and label one SAE per (k, h) grid point");
    auto* label_cmd = app.add_subcommand("label", "label and verify the trained SAE's neurons");
    auto* match_cmd = app.add_subcommand("match", "select subject concept sets from the labeled neurons");
    auto* align_cmd = app.add_subcommand("align", "Procrustes-align source dumps to a reference dump");
    auto* emerge_cmd = app.add_subcommand("emerge", "concept-activation curve along the configured axis");
    for (auto* s : {train_cmd, sweep_cmd, label_cmd, match_cmd, align_cmd, emerge_cmd}) add_common(s);

    std::vector<std::string> queries;
    match_cmd->add_option("queries", queries, "subject queries (default: match.queries)");

    std::vector<std::string> dumps;
    auto* validate_cmd = app.add_subcommand("validate-dump", "check activation dumps and their metadata");
    validate_cmd->add_option("dumps", dumps, "dump paths")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate_cmd->parsed()) {
            for (const auto& d : dumps) cmd_validate_dump(d, std::cout);
            return 0;
        }
        std::vector<std::string> all = overrides;
        auto* active = app.get_subcommands().front();
        if (active->count("--output-dir")) all.push_back("output_dir=" + nlohmann::json(output_dir).dump());
        if (active->count("--seed")) all.push_back("seed=" + std::to_string(seed));
        const auto cfg = load_config(config_path, all);

        if (train_cmd->parsed()) cmd_train(cfg, std::cout);
        else if (sweep_cmd->parsed()) cmd_sweep(cfg, std::cout);
        else if (label_cmd->parsed()) cmd_label(cfg, std::cout);
        else if (match_cmd->parsed()) cmd_match(cfg, queries, std::cout);
        else if (align_cmd->parsed()) cmd_align(cfg, std::cout);
        else if (emerge_cmd->parsed()) cmd_emerge(cfg, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
