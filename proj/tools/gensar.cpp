#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "gensar/pipeline.hpp"

using namespace gensar;

int main(int argc, char** argv) {
    CLI::App app{"gensar: joint generative search & recommendation pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, workdir, tasks_csv, negatives;
    std::uint64_t seed = 0;
    bool have_seed = false, force = false, no_behavior = false;
    std::size_t beam_width = 0;

    app.add_option("--config", config_path, "pipeline config file (INI)");
    app.add_option("--workdir", workdir, "working directory");
    app.add_option("--seed", seed, "global seed")->each([&](const std::string&) {
        have_seed = true;
    });
    app.add_flag("--force", force, "overwrite existing outputs");
    app.add_option("--tasks", tasks_csv,
                   "comma list of enabled tasks: nrip,nsqp,nsip,desc2id,id2desc");
    app.add_flag("--no-behavior-token", no_behavior,
                 "drop behavior tokens from instructions and responses");
    app.add_option("--negatives", negatives, "search negatives: random | bm25");
    app.add_option("--beam-width", beam_width, "beam width for decoding");

    auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic corpus");
    auto* cmd_train_ids =
        app.add_subcommand("train-ids", "train the identifier quantizer");
    auto* cmd_export_ids =
        app.add_subcommand("export-ids", "export identifiers and vocabulary");
    auto* cmd_build = app.add_subcommand("build-data", "build instruction datasets");
    auto* cmd_train = app.add_subcommand("train-model", "train the seq2seq model");
    auto* cmd_eval = app.add_subcommand("evaluate", "evaluate on the test split");
    auto* cmd_coll = app.add_subcommand("collision-report",
                                        "collision rates of exported identifiers");
    auto* cmd_ablate =
        app.add_subcommand("ablate", "run build-data/train-model/evaluate for a flag set");
    std::string ablation = "none";
    cmd_ablate->add_option("name", ablation,
                           "none | no-nrip | no-nsqp | no-nsip | no-desc2id | "
                           "no-id2desc | no-behavior-token");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg =
            config_path.empty() ? PipelineConfig{} : load_config_file(config_path);
        if (const char* env = std::getenv("GENSAR_WORKDIR"); env && *env)
            cfg.workdir = env;
        if (!workdir.empty()) cfg.workdir = workdir;
        if (have_seed) cfg.seed = seed;
        if (!tasks_csv.empty()) {
            bool behavior = cfg.tasks.behavior_token;
            cfg.tasks = parse_task_set(tasks_csv);
            cfg.tasks.behavior_token = behavior;
        }
        if (no_behavior) cfg.tasks.behavior_token = false;
        if (!negatives.empty()) cfg.negatives = negatives;
        if (beam_width) cfg.beam_width = beam_width;

        if (*cmd_synth) {
            stage_synth(cfg, force);
            std::printf("synth: wrote corpus to %s\n", cfg.data_dir().c_str());
        } else if (*cmd_train_ids) {
            auto log = stage_train_ids(cfg, force);
            std::printf("train-ids: loss %.6f -> %.6f over %zu entries\n",
                        log.total_loss.front(), log.total_loss.back(),
                        log.total_loss.size());
        } else if (*cmd_export_ids) {
            stage_export_ids(cfg, force);
            std::printf("export-ids: wrote %s\n",
                        pipeline_paths(cfg).identifiers.c_str());
        } else if (*cmd_build) {
            stage_build_data(cfg, force);
            std::printf("build-data: wrote %s\n", pipeline_paths(cfg).train_data.c_str());
        } else if (*cmd_train) {
            auto log = stage_train_model(cfg, force);
            std::printf("train-model: nll %.4f -> %.4f (valid %.4f)\n",
                        log.front().train_nll, log.back().train_nll,
                        log.back().valid_nll);
        } else if (*cmd_eval) {
            auto report = stage_evaluate(cfg, force);
            std::printf("rec:    HR@5 %.4f NDCG@5 %.4f (n=%zu)\n", report.rec.hr5,
                        report.rec.ndcg5, report.rec.n_rows);
            std::printf("search: HR@5 %.4f NDCG@5 %.4f (n=%zu)\n", report.search.hr5,
                        report.search.ndcg5, report.search.n_rows);
        } else if (*cmd_coll) {
            auto r = stage_collision_report(cfg, force);
            std::printf("collisions over %zu items: semantic %.4f collab %.4f\n",
                        r.n_items, r.semantic_rate, r.collab_rate);
        } else if (*cmd_ablate) {
            auto [ablated, baseline] = stage_ablate(cfg, ablation, force);
            std::printf("%-18s %12s %12s\n", "", "baseline", ablation.c_str());
            std::printf("%-18s %12.4f %12.4f\n", "rec HR@5", baseline.rec.hr5,
                        ablated.rec.hr5);
            std::printf("%-18s %12.4f %12.4f\n", "search HR@5", baseline.search.hr5,
                        ablated.search.hr5);
        }
    } catch (const MissingInputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
