#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccp/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"chance-constrained proxy-based metric learning toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, embeddings_path, summary_a, summary_b;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* run = app.add_subcommand("run", "train per an experiment config");
    run->add_option("--config", config_path, "config file path")->required();
    run->add_option("--out", out_dir, "output directory (overrides config)");
    run->add_option("--seed", seed, "seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });

    auto* compare = app.add_subcommand("compare", "diff two run summaries");
    compare->add_option("a", summary_a, "first summary.json")->required();
    compare->add_option("b", summary_b, "second summary.json")->required();

    auto* eval = app.add_subcommand("eval", "retrieval metrics on an embedding dump");
    eval->add_option("--embeddings", embeddings_path, "embeddings.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            ccp::ExperimentConfig cfg = ccp::load_config(config_path);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (seed_set) cfg.seed = seed;
            const ccp::ExperimentOutput out = ccp::run_experiment(cfg);
            std::cout << "mode=" << cfg.mode << " seed=" << cfg.seed
                      << " steps=" << out.result.total_steps
                      << " projections=" << out.result.projections.size()
                      << " best_val_map_at_r=" << out.result.best_val_map_at_r
                      << " final_map_at_r=" << out.final_report.map_at_r
                      << " wall_s=" << out.wall_seconds << "\n";
        } else if (compare->parsed()) {
            std::cout << ccp::compare_summaries(summary_a, summary_b).dump(2) << "\n";
        } else if (eval->parsed()) {
            const ccp::RetrievalReport rep = ccp::evaluate_embeddings_csv(embeddings_path);
            nlohmann::json j;
            j["p_at_1"] = rep.p_at_1;
            j["p_at_r"] = rep.p_at_r;
            j["map_at_r"] = rep.map_at_r;
            j["num_queries"] = rep.num_queries;
            j["num_skipped"] = rep.num_skipped;
            std::cout << j.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
