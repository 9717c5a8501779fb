#include "gensar/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace gensar {

// --- config ----------------------------------------------------------------

std::string serialize_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << "[pipeline]\n"
       << "workdir = " << cfg.workdir << "\n"
       << "seed = " << cfg.seed << "\n"
       << "negatives = " << cfg.negatives << "\n"
       << "beam_width = " << cfg.beam_width << "\n"
       << "n_max = " << cfg.n_max << "\n";
    os << "[synth]\n"
       << "n_users = " << cfg.synth.n_users << "\n"
       << "n_items = " << cfg.synth.n_items << "\n"
       << "n_queries = " << cfg.synth.n_queries << "\n"
       << "n_clusters = " << cfg.synth.n_clusters << "\n"
       << "n_subclusters = " << cfg.synth.n_subclusters << "\n"
       << "history_len = " << cfg.synth.history_len << "\n"
       << "d_s = " << cfg.synth.d_s << "\n"
       << "d_c = " << cfg.synth.d_c << "\n"
       << "search_prob = " << cfg.synth.search_prob << "\n"
       << "subcluster_affinity = " << cfg.synth.subcluster_affinity << "\n"
       << "sem_twin_frac = " << cfg.synth.sem_twin_frac << "\n"
       << "collab_twin_frac = " << cfg.synth.collab_twin_frac << "\n";
    os << "[rqvae]\n"
       << "d = " << cfg.rqvae.d << "\n"
       << "L_m = " << cfg.rqvae.L_m << "\n"
       << "L_n = " << cfg.rqvae.L_n << "\n"
       << "K = " << cfg.rqvae.K << "\n"
       << "alpha = " << cfg.rqvae.alpha << "\n"
       << "epochs = " << cfg.rqvae.epochs << "\n"
       << "batch_size = " << cfg.rqvae.batch_size << "\n"
       << "lr = " << cfg.rqvae.lr << "\n";
    os << "[model]\n"
       << "dim = " << cfg.model.dim << "\n"
       << "n_enc = " << cfg.model.n_enc << "\n"
       << "n_dec = " << cfg.model.n_dec << "\n"
       << "heads = " << cfg.model.heads << "\n"
       << "ffn = " << cfg.model.ffn << "\n"
       << "max_src = " << cfg.model.max_src << "\n"
       << "max_tgt = " << cfg.model.max_tgt << "\n"
       << "dropout = " << cfg.model.dropout << "\n"
       << "lr = " << cfg.model.lr << "\n"
       << "epochs = " << cfg.model.epochs << "\n"
       << "batch = " << cfg.model.batch << "\n";
    os << "[tasks]\n"
       << "nrip = " << cfg.tasks.nrip << "\n"
       << "nsqp = " << cfg.tasks.nsqp << "\n"
       << "nsip = " << cfg.tasks.nsip << "\n"
       << "desc2id = " << cfg.tasks.desc2id << "\n"
       << "id2desc = " << cfg.tasks.id2desc << "\n"
       << "behavior_token = " << cfg.tasks.behavior_token << "\n";
    return os.str();
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        auto trim = [](std::string s) {
            auto b2 = s.find_first_not_of(" \t");
            auto e2 = s.find_last_not_of(" \t");
            return b2 == std::string::npos ? std::string() : s.substr(b2, e2 - b2 + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        auto as_u64 = [&val, &key]() {
            try {
                return std::stoull(val);
            } catch (const std::exception&) {
                throw ConfigError("bad integer for " + key + ": " + val);
            }
        };
        auto as_f = [&val, &key]() {
            try {
                return std::stod(val);
            } catch (const std::exception&) {
                throw ConfigError("bad number for " + key + ": " + val);
            }
        };
        auto as_bool = [&val, &key]() {
            if (val == "1" || val == "true" || val == "on") return true;
            if (val == "0" || val == "false" || val == "off") return false;
            throw ConfigError("bad boolean for " + key + ": " + val);
        };
        bool known = true;
        if (section == "pipeline") {
            if (key == "workdir") cfg.workdir = val;
            else if (key == "seed") cfg.seed = as_u64();
            else if (key == "negatives") cfg.negatives = val;
            else if (key == "beam_width") cfg.beam_width = as_u64();
            else if (key == "n_max") cfg.n_max = as_u64();
            else known = false;
        } else if (section == "synth") {
            if (key == "n_users") cfg.synth.n_users = as_u64();
            else if (key == "n_items") cfg.synth.n_items = as_u64();
            else if (key == "n_queries") cfg.synth.n_queries = as_u64();
            else if (key == "n_clusters") cfg.synth.n_clusters = as_u64();
            else if (key == "n_subclusters") cfg.synth.n_subclusters = as_u64();
            else if (key == "history_len") cfg.synth.history_len = as_u64();
            else if (key == "d_s") cfg.synth.d_s = as_u64();
            else if (key == "d_c") cfg.synth.d_c = as_u64();
            else if (key == "search_prob") cfg.synth.search_prob = as_f();
            else if (key == "subcluster_affinity") cfg.synth.subcluster_affinity = as_f();
            else if (key == "sem_twin_frac") cfg.synth.sem_twin_frac = as_f();
            else if (key == "collab_twin_frac") cfg.synth.collab_twin_frac = as_f();
            else known = false;
        } else if (section == "rqvae") {
            if (key == "d") cfg.rqvae.d = as_u64();
            else if (key == "L_m") cfg.rqvae.L_m = as_u64();
            else if (key == "L_n") cfg.rqvae.L_n = as_u64();
            else if (key == "K") cfg.rqvae.K = as_u64();
            else if (key == "alpha") cfg.rqvae.alpha = static_cast<float>(as_f());
            else if (key == "epochs") cfg.rqvae.epochs = static_cast<int>(as_u64());
            else if (key == "batch_size") cfg.rqvae.batch_size = as_u64();
            else if (key == "lr") cfg.rqvae.lr = static_cast<float>(as_f());
            else known = false;
        } else if (section == "model") {
            if (key == "dim") cfg.model.dim = as_u64();
            else if (key == "n_enc") cfg.model.n_enc = as_u64();
            else if (key == "n_dec") cfg.model.n_dec = as_u64();
            else if (key == "heads") cfg.model.heads = as_u64();
            else if (key == "ffn") cfg.model.ffn = as_u64();
            else if (key == "max_src") cfg.model.max_src = as_u64();
            else if (key == "max_tgt") cfg.model.max_tgt = as_u64();
            else if (key == "dropout") cfg.model.dropout = static_cast<float>(as_f());
            else if (key == "lr") cfg.model.lr = static_cast<float>(as_f());
            else if (key == "epochs") cfg.model.epochs = static_cast<int>(as_u64());
            else if (key == "batch") cfg.model.batch = as_u64();
            else known = false;
        } else if (section == "tasks") {
            if (key == "nrip") cfg.tasks.nrip = as_bool();
            else if (key == "nsqp") cfg.tasks.nsqp = as_bool();
            else if (key == "nsip") cfg.tasks.nsip = as_bool();
            else if (key == "desc2id") cfg.tasks.desc2id = as_bool();
            else if (key == "id2desc") cfg.tasks.id2desc = as_bool();
            else if (key == "behavior_token") cfg.tasks.behavior_token = as_bool();
            else known = false;
        } else {
            throw ConfigError("unknown config section [" + section + "]");
        }
        if (!known)
            throw ConfigError("unknown config key " + key + " in [" + section + "]");
    }
    if (cfg.negatives != "random" && cfg.negatives != "bm25")
        throw ConfigError("negatives must be random or bm25");
    return cfg;
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot digest missing file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return fnv1a(os.str());
}

Paths pipeline_paths(const PipelineConfig& cfg) {
    Paths p;
    const std::string d = cfg.data_dir(), r = cfg.run_dir();
    p.histories = d + "/histories.jsonl";
    p.catalog = d + "/catalog.jsonl";
    p.queries = d + "/queries.jsonl";
    p.embeddings = d + "/embeddings.gseb";
    p.rqvae_ckpt = d + "/rqvae.gsnm";
    p.rqvae_log = d + "/rqvae_log.csv";
    p.identifiers = d + "/identifiers.jsonl";
    p.vocab = d + "/vocab.jsonl";
    p.train_data = r + "/instructions_train.jsonl";
    p.valid_data = r + "/instructions_valid.jsonl";
    p.model_ckpt = r + "/model.gsnm";
    p.model_log = r + "/train_log.csv";
    p.candidates = r + "/candidates_test.jsonl";
    p.report = r + "/report.json";
    p.collisions = r + "/collisions.json";
    return p;
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage) {
    return derive_seed(cfg.seed, fnv1a(stage));
}

void write_manifest(const std::string& output, const std::string& stage,
                    const PipelineConfig& cfg,
                    const std::vector<std::string>& inputs, double wall_seconds) {
    nlohmann::json in_digests = nlohmann::json::object();
    for (const auto& p : inputs) in_digests[p] = digest_file(p);
    nlohmann::json j{{"stage", stage},
                     {"output", output},
                     {"config_hash", fnv1a(serialize_config(cfg))},
                     {"seed", cfg.seed},
                     {"inputs", in_digests},
                     {"wall_seconds", wall_seconds}};
    std::ofstream out(output + ".manifest.json");
    if (!out) throw MissingInputError("cannot write manifest for " + output);
    out << j.dump(2) << '\n';
}

namespace {

void require_inputs(const std::vector<std::string>& paths) {
    for (const auto& p : paths)
        if (!fs::exists(p)) throw MissingInputError("missing input: " + p);
}

void guard_outputs(const std::vector<std::string>& paths, bool force) {
    for (const auto& p : paths)
        if (fs::exists(p) && !force)
            throw ConfigError("refusing to overwrite " + p + " (use --force)");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Validation examples for the model: the held-out valid targets of the two
// next-item tasks, rendered exactly like training data.
std::vector<InstructionExample> build_valid_instructions(
    const std::vector<UserHistory>& histories, const SplitResult& splits,
    const std::map<std::uint64_t, ItemIdentifier>& ids,
    const std::vector<QueryInfo>& queries, const TokenVocabulary& vocab,
    const TaskSet& tasks, std::size_t n_max) {
    auto qwords = query_word_map(queries, vocab);
    std::vector<InstructionExample> out;
    auto strip = [&tasks](std::vector<int> seq) {
        if (!tasks.behavior_token) seq.erase(seq.begin());
        return seq;
    };
    for (const auto& h : histories) {
        const auto& us = splits.users.at(h.user);
        if (tasks.nrip && us.rec.valid) {
            std::size_t idx = *us.rec.valid;
            InstructionExample ex;
            ex.task = "NRIP";
            ex.instruction =
                render_history(h, idx, ids, qwords, vocab, tasks.behavior_token, n_max);
            ex.response = strip(behavior_identifier(vocab, Behavior::RecItem,
                                                    ids.at(h.events[idx].payload)));
            out.push_back(std::move(ex));
        }
        if (tasks.nsip && us.search.valid) {
            std::size_t idx = *us.search.valid;
            InstructionExample ex;
            ex.task = "NSIP";
            ex.instruction =
                render_history(h, idx, ids, qwords, vocab, tasks.behavior_token, n_max);
            ex.response = strip(behavior_identifier(vocab, Behavior::SearchItem,
                                                    ids.at(h.events[idx].payload)));
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::vector<SeqExample> to_seq_examples(const std::vector<InstructionExample>& data) {
    std::vector<SeqExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back({ex.instruction, ex.response});
    return out;
}

}  // namespace

std::map<std::uint64_t, ItemIdentifier> identifier_map(
    const std::vector<ItemIdentifierCodes<float>>& codes,
    const TokenVocabulary& vocab) {
    std::map<std::uint64_t, ItemIdentifier> out;
    for (const auto& c : codes)
        out[c.item] = make_item_identifier(vocab, c.item, c.shared, c.semantic, c.collab);
    return out;
}

// --- stages ------------------------------------------------------------------

void stage_synth(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    guard_outputs({p.histories, p.catalog, p.queries, p.embeddings}, force);
    fs::create_directories(cfg.data_dir());
    SynthConfig sc = cfg.synth;
    sc.seed = stage_seed(cfg, "synth");
    SynthCorpus corpus = generate_synthetic(sc);
    write_histories(p.histories, corpus.histories);
    write_catalog(p.catalog, corpus.catalog);
    write_queries(p.queries, corpus.queries);
    write_embeddings(p.embeddings, corpus.embeddings, sc.d_s, sc.d_c);
    double secs = seconds_since(t0);
    for (const auto& out : {p.histories, p.catalog, p.queries, p.embeddings})
        write_manifest(out, "synth", cfg, {}, secs);
}

RqvaeTrainLog<float> stage_train_ids(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs({p.embeddings});
    guard_outputs({p.rqvae_ckpt, p.rqvae_log}, force);
    auto embeddings = read_embeddings(p.embeddings);
    if (embeddings.empty()) throw ConfigError("no embeddings in " + p.embeddings);
    RqvaeConfig<float> rc = cfg.rqvae;
    rc.d_s = embeddings.front().semantic.size();
    rc.d_c = embeddings.front().collaborative.size();
    rc.seed = stage_seed(cfg, "train-ids");
    Rqvae<float> model(rc);
    auto log = model.train(embeddings);
    model.save(p.rqvae_ckpt);
    {
        std::ofstream out(p.rqvae_log);
        out << "epoch,total_loss,recon_mse\n";
        for (std::size_t e = 0; e < log.total_loss.size(); ++e)
            out << e << ',' << log.total_loss[e] << ',' << log.recon_mse[e] << '\n';
    }
    double secs = seconds_since(t0);
    write_manifest(p.rqvae_ckpt, "train-ids", cfg, {p.embeddings}, secs);
    write_manifest(p.rqvae_log, "train-ids", cfg, {p.embeddings}, secs);
    return log;
}

void stage_export_ids(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs({p.embeddings, p.rqvae_ckpt, p.catalog, p.queries});
    guard_outputs({p.identifiers, p.vocab}, force);
    auto embeddings = read_embeddings(p.embeddings);
    if (embeddings.empty()) throw ConfigError("no embeddings in " + p.embeddings);
    RqvaeConfig<float> rc = cfg.rqvae;
    rc.d_s = embeddings.front().semantic.size();
    rc.d_c = embeddings.front().collaborative.size();
    rc.seed = stage_seed(cfg, "train-ids");
    Rqvae<float> model(rc);
    model.load(p.rqvae_ckpt);
    auto ids = model.export_identifiers(embeddings);
    write_identifiers(p.identifiers, ids);
    auto catalog = read_catalog(p.catalog);
    auto queries = read_queries(p.queries);
    TokenVocabulary vocab(rc.L_m, rc.L_n, rc.K, collect_words(catalog, queries));
    vocab.save_jsonl(p.vocab);
    double secs = seconds_since(t0);
    std::vector<std::string> inputs{p.embeddings, p.rqvae_ckpt, p.catalog, p.queries};
    write_manifest(p.identifiers, "export-ids", cfg, inputs, secs);
    write_manifest(p.vocab, "export-ids", cfg, inputs, secs);
}

void stage_build_data(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs({p.histories, p.catalog, p.queries, p.identifiers, p.vocab});
    guard_outputs({p.train_data, p.valid_data}, force);
    fs::create_directories(cfg.run_dir());
    auto histories = read_histories(p.histories);
    auto catalog = read_catalog(p.catalog);
    auto queries = read_queries(p.queries);
    auto vocab = TokenVocabulary::load_jsonl(p.vocab);
    auto ids = identifier_map(read_identifiers(p.identifiers), vocab);
    auto splits = split(histories);
    auto train = build_instructions(histories, splits, ids, catalog, queries, vocab,
                                    cfg.tasks, cfg.n_max);
    auto valid = build_valid_instructions(histories, splits, ids, queries, vocab,
                                          cfg.tasks, cfg.n_max);
    write_instructions(p.train_data, train);
    write_instructions(p.valid_data, valid);
    double secs = seconds_since(t0);
    std::vector<std::string> inputs{p.histories, p.catalog, p.queries, p.identifiers,
                                    p.vocab};
    write_manifest(p.train_data, "build-data", cfg, inputs, secs);
    write_manifest(p.valid_data, "build-data", cfg, inputs, secs);
}

std::vector<SeqEpochLog> stage_train_model(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs({p.train_data, p.valid_data, p.vocab});
    guard_outputs({p.model_ckpt, p.model_log}, force);
    auto vocab = TokenVocabulary::load_jsonl(p.vocab);
    auto train = to_seq_examples(read_instructions(p.train_data));
    auto valid = to_seq_examples(read_instructions(p.valid_data));
    SeqModelConfig<float> mc = cfg.model;
    mc.vocab = vocab.size();
    mc.seed = stage_seed(cfg, "train-model");
    SeqModel<float> model(mc);
    auto log = train_seq_model(model, train, valid);
    model.save(p.model_ckpt);
    {
        std::ofstream out(p.model_log);
        out << "epoch,train_nll,valid_nll,seconds\n";
        for (std::size_t e = 0; e < log.size(); ++e)
            out << e << ',' << log[e].train_nll << ',' << log[e].valid_nll << ','
                << log[e].seconds << '\n';
    }
    double secs = seconds_since(t0);
    std::vector<std::string> inputs{p.train_data, p.valid_data, p.vocab};
    write_manifest(p.model_ckpt, "train-model", cfg, inputs, secs);
    write_manifest(p.model_log, "train-model", cfg, inputs, secs);
    return log;
}

EvalReport stage_evaluate(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs(
        {p.histories, p.catalog, p.queries, p.identifiers, p.vocab, p.model_ckpt});
    guard_outputs({p.candidates, p.report}, force);
    fs::create_directories(cfg.run_dir());
    auto histories = read_histories(p.histories);
    auto catalog = read_catalog(p.catalog);
    auto queries = read_queries(p.queries);
    auto vocab = TokenVocabulary::load_jsonl(p.vocab);
    auto ids = identifier_map(read_identifiers(p.identifiers), vocab);
    auto splits = split(histories);
    auto lists = build_candidate_lists(histories, splits, catalog, queries,
                                       EvalSplit::Test, cfg.negatives,
                                       stage_seed(cfg, "evaluate"));
    write_candidate_lists(p.candidates, lists);
    SeqModelConfig<float> mc = cfg.model;
    mc.vocab = vocab.size();
    mc.seed = stage_seed(cfg, "train-model");
    SeqModel<float> model(mc);
    model.load(p.model_ckpt);
    auto qwords = query_word_map(queries, vocab);
    EvalReport report = evaluate_model(model, histories, lists, ids, qwords, vocab,
                                       cfg.tasks.behavior_token, cfg.n_max);
    write_eval_report(p.report, report);
    double secs = seconds_since(t0);
    std::vector<std::string> inputs{p.histories, p.catalog, p.queries, p.identifiers,
                                    p.vocab, p.model_ckpt};
    write_manifest(p.candidates, "evaluate", cfg, inputs, secs);
    write_manifest(p.report, "evaluate", cfg, inputs, secs);
    return report;
}

CollisionReport stage_collision_report(const PipelineConfig& cfg, bool force) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = pipeline_paths(cfg);
    require_inputs({p.identifiers, p.vocab});
    guard_outputs({p.collisions}, force);
    fs::create_directories(cfg.run_dir());
    auto vocab = TokenVocabulary::load_jsonl(p.vocab);
    auto codes = read_identifiers(p.identifiers);
    std::vector<std::vector<int>> sem, col;
    for (const auto& c : codes) {
        auto id = make_item_identifier(vocab, c.item, c.shared, c.semantic, c.collab);
        sem.push_back(id.semantic_tokens);
        col.push_back(id.collab_tokens);
    }
    CollisionReport r;
    r.n_items = codes.size();
    r.semantic_rate = collision_rate(sem);
    r.collab_rate = collision_rate(col);
    nlohmann::json j{{"n_items", r.n_items},
                     {"semantic_collision_rate", r.semantic_rate},
                     {"collab_collision_rate", r.collab_rate}};
    std::ofstream out(p.collisions);
    if (!out) throw MissingInputError("cannot write " + p.collisions);
    out << j.dump(2) << '\n';
    write_manifest(p.collisions, "collision-report", cfg, {p.identifiers, p.vocab},
                   seconds_since(t0));
    return r;
}

TaskSet apply_ablation(TaskSet tasks, const std::string& name) {
    if (name == "none") return tasks;
    if (name == "no-nrip") tasks.nrip = false;
    else if (name == "no-nsqp") tasks.nsqp = false;
    else if (name == "no-nsip") tasks.nsip = false;
    else if (name == "no-desc2id") tasks.desc2id = false;
    else if (name == "no-id2desc") tasks.id2desc = false;
    else if (name == "no-behavior-token") tasks.behavior_token = false;
    else throw ConfigError("unknown ablation: " + name);
    return tasks;
}

std::pair<EvalReport, EvalReport> stage_ablate(const PipelineConfig& cfg,
                                               const std::string& name, bool force) {
    PipelineConfig base = cfg;
    base.run_subdir.clear();
    Paths base_paths = pipeline_paths(base);
    if (!fs::exists(base_paths.report)) {
        if (!fs::exists(base_paths.train_data)) stage_build_data(base, force);
        if (!fs::exists(base_paths.model_ckpt)) stage_train_model(base, force);
        stage_evaluate(base, force);
    }
    EvalReport baseline = read_eval_report(base_paths.report);

    PipelineConfig ab = cfg;
    ab.run_subdir = "ablate-" + name;
    ab.tasks = apply_ablation(cfg.tasks, name);
    stage_build_data(ab, force);
    stage_train_model(ab, force);
    EvalReport ablated = stage_evaluate(ab, force);

    nlohmann::json cmp{
        {"ablation", name},
        {"baseline",
         {{"rec_hr5", baseline.rec.hr5}, {"search_hr5", baseline.search.hr5}}},
        {"ablated", {{"rec_hr5", ablated.rec.hr5}, {"search_hr5", ablated.search.hr5}}},
        {"delta_rec_hr5", ablated.rec.hr5 - baseline.rec.hr5},
        {"delta_search_hr5", ablated.search.hr5 - baseline.search.hr5}};
    std::ofstream out(ab.run_dir() + "/comparison.json");
    out << cmp.dump(2) << '\n';
    return {ablated, baseline};
}

}  // namespace gensar
