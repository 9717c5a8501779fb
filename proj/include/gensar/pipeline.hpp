#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gensar/corpus.hpp"
#include "gensar/eval.hpp"
#include "gensar/rqvae.hpp"
#include "gensar/seqmodel.hpp"

namespace gensar {

// Everything a pipeline run needs, loadable from an INI-style config file
// with CLI-flag overrides. `data_dir` holds corpus and identifier artifacts;
// `run_dir` holds instruction data, model and evaluation outputs (the two
// differ only for ablation runs, which share the corpus of the parent run).
struct PipelineConfig {
    std::string workdir = "work";
    std::string run_subdir;  // empty = workdir itself
    std::uint64_t seed = 1;

    SynthConfig synth;
    RqvaeConfig<float> rqvae;
    SeqModelConfig<float> model;
    TaskSet tasks;

    // desk-scale defaults, sized for the bundled synthetic corpus
    PipelineConfig() {
        rqvae.L_n = 1;
        rqvae.K = 64;
        rqvae.epochs = 15;
        model.epochs = 8;
        model.batch = 64;
    }

    std::string negatives = "bm25";  // search negatives: random | bm25
    std::size_t beam_width = 20;
    std::size_t n_max = 20;  // history truncation

    std::string data_dir() const { return workdir; }
    std::string run_dir() const {
        return run_subdir.empty() ? workdir : workdir + "/" + run_subdir;
    }
};

// Canonical text form of the config (also hashed into manifests).
std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config_file(const std::string& path);

// FNV-1a digests used in manifests.
std::uint64_t fnv1a(const std::string& bytes);
std::uint64_t digest_file(const std::string& path);

struct Paths {
    std::string histories, catalog, queries, embeddings;
    std::string rqvae_ckpt, rqvae_log, identifiers, vocab;
    std::string train_data, valid_data;
    std::string model_ckpt, model_log;
    std::string candidates, report;
    std::string collisions;
};
Paths pipeline_paths(const PipelineConfig& cfg);

// Per-stage derived seeds so stages are independently reproducible.
std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage);

// Writes <output>.manifest.json describing how the output was produced.
void write_manifest(const std::string& output, const std::string& stage,
                    const PipelineConfig& cfg,
                    const std::vector<std::string>& inputs, double wall_seconds);

// Stages. Each verifies its inputs exist (MissingInputError otherwise),
// refuses to overwrite outputs unless `force`, and writes manifests.
void stage_synth(const PipelineConfig& cfg, bool force);
RqvaeTrainLog<float> stage_train_ids(const PipelineConfig& cfg, bool force);
void stage_export_ids(const PipelineConfig& cfg, bool force);
void stage_build_data(const PipelineConfig& cfg, bool force);
std::vector<SeqEpochLog> stage_train_model(const PipelineConfig& cfg, bool force);
EvalReport stage_evaluate(const PipelineConfig& cfg, bool force);

struct CollisionReport {
    double semantic_rate = 0;
    double collab_rate = 0;
    std::size_t n_items = 0;
};
CollisionReport stage_collision_report(const PipelineConfig& cfg, bool force);

// Runs build-data -> train-model -> evaluate under run_subdir "ablate-<name>"
// with the named flag applied, then returns (ablated, baseline) reports.
// Names: none, no-nrip, no-nsqp, no-nsip, no-desc2id, no-id2desc,
// no-behavior-token.
TaskSet apply_ablation(TaskSet tasks, const std::string& name);
std::pair<EvalReport, EvalReport> stage_ablate(const PipelineConfig& cfg,
                                               const std::string& name, bool force);

// Shared helpers for stages and tests.
std::map<std::uint64_t, ItemIdentifier> identifier_map(
    const std::vector<ItemIdentifierCodes<float>>& codes,
    const TokenVocabulary& vocab);

}  // namespace gensar
