#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gensar/pipeline.hpp"

using namespace gensar;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* name) {
    auto path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
    return path.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// small but non-degenerate: enough items for 99-negative eval lists
PipelineConfig mini_config(const std::string& workdir, std::uint64_t seed = 5) {
    PipelineConfig cfg;
    cfg.workdir = workdir;
    cfg.seed = seed;
    cfg.negatives = "random";
    cfg.synth.n_users = 24;
    cfg.synth.n_items = 150;
    cfg.synth.n_queries = 8;
    cfg.synth.n_clusters = 4;
    cfg.synth.n_subclusters = 3;
    cfg.synth.history_len = 12;
    cfg.synth.d_s = 12;
    cfg.synth.d_c = 12;
    cfg.rqvae.d = 8;
    cfg.rqvae.L_m = 1;
    cfg.rqvae.L_n = 1;
    cfg.rqvae.K = 16;
    cfg.rqvae.epochs = 3;
    cfg.rqvae.batch_size = 32;
    cfg.model.dim = 16;
    cfg.model.n_enc = 1;
    cfg.model.n_dec = 1;
    cfg.model.heads = 2;
    cfg.model.ffn = 24;
    cfg.model.max_src = 128;
    cfg.model.max_tgt = 12;
    cfg.model.epochs = 2;
    cfg.model.batch = 16;
    cfg.n_max = 10;
    return cfg;
}

void run_all_stages(const PipelineConfig& cfg) {
    stage_synth(cfg, false);
    stage_train_ids(cfg, false);
    stage_export_ids(cfg, false);
    stage_build_data(cfg, false);
    stage_train_model(cfg, false);
    stage_evaluate(cfg, false);
    stage_collision_report(cfg, false);
}

}  // namespace

TEST_CASE("config serialization round-trips every field") {
    PipelineConfig cfg = mini_config("/tmp/x", 42);
    cfg.negatives = "bm25";
    cfg.beam_width = 7;
    cfg.tasks.nsqp = false;
    cfg.tasks.behavior_token = false;
    cfg.synth.search_prob = 0.4;
    cfg.rqvae.alpha = 0.5f;
    cfg.model.dropout = 0.125f;

    PipelineConfig back = parse_config(serialize_config(cfg));
    CHECK(serialize_config(back) == serialize_config(cfg));
    CHECK(back.workdir == cfg.workdir);
    CHECK(back.seed == 42);
    CHECK(back.negatives == "bm25");
    CHECK(back.beam_width == 7);
    CHECK(back.synth.n_items == cfg.synth.n_items);
    CHECK(back.rqvae.K == cfg.rqvae.K);
    CHECK(back.model.dim == cfg.model.dim);
    CHECK(!back.tasks.nsqp);
    CHECK(!back.tasks.behavior_token);
}

TEST_CASE("config parser rejects malformed input") {
    CHECK_THROWS_AS(parse_config("[pipeline]\nbogus_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nosuch]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[pipeline]\nnegatives = hardest\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[pipeline]\nseed fifteen\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[pipeline]\nseed = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[tasks]\nnrip = maybe\n"), ConfigError);
    // comments and blank lines are fine
    auto cfg = parse_config("# top comment\n\n[pipeline]\nseed = 3 # trailing\n");
    CHECK(cfg.seed == 3);
    CHECK_THROWS_AS(load_config_file("/nonexistent/gensar.ini"), MissingInputError);
}

TEST_CASE("fnv1a matches the reference constants") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("ab") != fnv1a("ba"));
}

TEST_CASE("stage seeds differ per stage but are stable") {
    auto cfg = mini_config("/tmp/x", 9);
    CHECK(stage_seed(cfg, "synth") == stage_seed(cfg, "synth"));
    CHECK(stage_seed(cfg, "synth") != stage_seed(cfg, "train-ids"));
    auto other = cfg;
    other.seed = 10;
    CHECK(stage_seed(cfg, "synth") != stage_seed(other, "synth"));
}

TEST_CASE("apply_ablation toggles exactly one flag") {
    TaskSet t;
    CHECK(apply_ablation(t, "none").nrip);
    CHECK(!apply_ablation(t, "no-nrip").nrip);
    CHECK(!apply_ablation(t, "no-nsqp").nsqp);
    CHECK(!apply_ablation(t, "no-nsip").nsip);
    CHECK(!apply_ablation(t, "no-desc2id").desc2id);
    CHECK(!apply_ablation(t, "no-id2desc").id2desc);
    CHECK(!apply_ablation(t, "no-behavior-token").behavior_token);
    CHECK(apply_ablation(t, "no-nsip").nrip);  // others untouched
    CHECK_THROWS_AS(apply_ablation(t, "no-everything"), ConfigError);
}

TEST_CASE("full mini pipeline produces every artifact with manifests") {
    auto cfg = mini_config(fresh_dir("gensar_pipe_a"));
    run_all_stages(cfg);
    Paths p = pipeline_paths(cfg);
    for (const auto& path :
         {p.histories, p.catalog, p.queries, p.embeddings, p.rqvae_ckpt, p.rqvae_log,
          p.identifiers, p.vocab, p.train_data, p.valid_data, p.model_ckpt,
          p.model_log, p.candidates, p.report, p.collisions}) {
        CHECK(fs::exists(path));
        CHECK(fs::exists(path + ".manifest.json"));
    }
    // manifests carry the config hash and input digests
    auto manifest = slurp(p.model_ckpt + ".manifest.json");
    CHECK(manifest.find("config_hash") != std::string::npos);
    CHECK(manifest.find("instructions_train.jsonl") != std::string::npos);

    auto report = read_eval_report(p.report);
    CHECK(report.rec.n_rows > 0);
    CHECK(report.search.n_rows > 0);
    CHECK(report.rec.hr5 >= 0.0);
    CHECK(report.rec.hr5 <= 1.0);

    auto collisions = stage_collision_report(cfg, true);
    CHECK(collisions.n_items == cfg.synth.n_items);
    CHECK(collisions.semantic_rate >= 0.0);
    CHECK(collisions.semantic_rate <= 1.0);

    // overwrite guard: rerunning without force refuses
    CHECK_THROWS_AS(stage_synth(cfg, false), ConfigError);
    CHECK_THROWS_AS(stage_train_model(cfg, false), ConfigError);
    fs::remove_all(cfg.workdir);
}

TEST_CASE("stages demand their inputs") {
    auto cfg = mini_config(fresh_dir("gensar_pipe_empty"));
    CHECK_THROWS_AS(stage_train_ids(cfg, false), MissingInputError);
    CHECK_THROWS_AS(stage_export_ids(cfg, false), MissingInputError);
    CHECK_THROWS_AS(stage_build_data(cfg, false), MissingInputError);
    CHECK_THROWS_AS(stage_train_model(cfg, false), MissingInputError);
    CHECK_THROWS_AS(stage_evaluate(cfg, false), MissingInputError);
    CHECK_THROWS_AS(stage_collision_report(cfg, false), MissingInputError);
    fs::remove_all(cfg.workdir);
}

TEST_CASE("same seed gives byte-identical identifiers and reports") {
    auto cfg_a = mini_config(fresh_dir("gensar_pipe_d1"), 77);
    auto cfg_b = mini_config(fresh_dir("gensar_pipe_d2"), 77);
    run_all_stages(cfg_a);
    run_all_stages(cfg_b);
    Paths pa = pipeline_paths(cfg_a), pb = pipeline_paths(cfg_b);
    CHECK(slurp(pa.identifiers) == slurp(pb.identifiers));
    CHECK(slurp(pa.report) == slurp(pb.report));
    CHECK(slurp(pa.vocab) == slurp(pb.vocab));
    CHECK(slurp(pa.candidates) == slurp(pb.candidates));

    // a different seed must actually change the data
    auto cfg_c = mini_config(fresh_dir("gensar_pipe_d3"), 78);
    stage_synth(cfg_c, false);
    Paths pc = pipeline_paths(cfg_c);
    CHECK(slurp(pa.histories) != slurp(pc.histories));
    fs::remove_all(cfg_a.workdir);
    fs::remove_all(cfg_b.workdir);
    fs::remove_all(cfg_c.workdir);
}

TEST_CASE("ablation runs share the corpus and write a comparison") {
    auto cfg = mini_config(fresh_dir("gensar_pipe_ab"));
    stage_synth(cfg, false);
    stage_train_ids(cfg, false);
    stage_export_ids(cfg, false);
    auto [ablated, baseline] = stage_ablate(cfg, "no-nsqp", false);
    CHECK(baseline.rec.n_rows == ablated.rec.n_rows);
    PipelineConfig ab = cfg;
    ab.run_subdir = "ablate-no-nsqp";
    Paths pab = pipeline_paths(ab);
    CHECK(fs::exists(pab.report));
    CHECK(fs::exists(ab.run_dir() + "/comparison.json"));
    // the ablated run used the shared identifier artifacts, not its own copy
    CHECK(!fs::exists(ab.run_dir() + "/identifiers.jsonl"));
    // no NSQP examples in the ablated training data
    auto data = read_instructions(pab.train_data);
    for (const auto& ex : data) CHECK(ex.task != "NSQP");
    fs::remove_all(cfg.workdir);
}
