#include "gensar/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gensar/rng.hpp"

namespace gensar {

static Behavior behavior_from_string(const std::string& s) {
    if (s == "<R_I>") return Behavior::RecItem;
    if (s == "<S_Q>") return Behavior::SearchQuery;
    if (s == "<S_I>") return Behavior::SearchItem;
    throw ConfigError("unknown behavior token: " + s);
}

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_clusters > cfg.n_items)
        throw ConfigError("synth: more clusters than items");
    if (cfg.n_queries < cfg.n_clusters)
        throw ConfigError("synth: need at least one query per cluster");
    if (cfg.history_len < 3) throw ConfigError("synth: history length must be >= 3");

    SynthCorpus corpus;
    corpus.cfg = cfg;
    Rng rng(derive_seed(cfg.seed, 0x51));

    // cluster centroids in semantic space, plus per-subcluster offsets
    std::vector<Vec<float>> centroid(cfg.n_clusters);
    std::vector<std::vector<Vec<float>>> sub_offset(cfg.n_clusters);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        centroid[c] = Vec<float>(cfg.d_s);
        for (auto& x : centroid[c].d) x = normal<float>(rng, 0.f, 1.f);
        sub_offset[c].resize(cfg.n_subclusters);
        for (std::size_t s = 0; s < cfg.n_subclusters; ++s) {
            sub_offset[c][s] = Vec<float>(cfg.d_s);
            for (auto& x : sub_offset[c][s].d) x = normal<float>(rng, 0.f, 0.4f);
        }
    }

    // catalog: deterministic cluster/subcluster assignment
    corpus.catalog.resize(cfg.n_items);
    std::vector<std::vector<std::vector<std::uint64_t>>> members(
        cfg.n_clusters, std::vector<std::vector<std::uint64_t>>(cfg.n_subclusters));
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        auto& item = corpus.catalog[i];
        item.id = i;
        item.cluster = static_cast<int>(i % cfg.n_clusters);
        item.subcluster = static_cast<int>((i / cfg.n_clusters) % cfg.n_subclusters);
        std::ostringstream desc;
        desc << "cluster-" << item.cluster << " item-" << i << " kc" << item.cluster
             << " ks" << item.cluster << "_" << item.subcluster;
        item.description = desc.str();
        members[item.cluster][item.subcluster].push_back(i);
    }

    // queries: query q names cluster q % n_clusters
    corpus.queries.resize(cfg.n_queries);
    std::vector<std::vector<std::uint64_t>> cluster_queries(cfg.n_clusters);
    for (std::size_t q = 0; q < cfg.n_queries; ++q) {
        auto& query = corpus.queries[q];
        query.id = q;
        query.cluster = static_cast<int>(q % cfg.n_clusters);
        std::ostringstream text;
        text << "find kc" << query.cluster << " q" << q;
        query.text = text.str();
        cluster_queries[query.cluster].push_back(q);
    }

    // user preference mixtures: two preferred clusters (0.7 / 0.3) and one
    // preferred subcluster per cluster
    corpus.user_cluster_pref.assign(cfg.n_users,
                                    std::vector<double>(cfg.n_clusters, 0.0));
    corpus.user_pref_subcluster.assign(cfg.n_users,
                                       std::vector<int>(cfg.n_clusters, 0));
    std::vector<Vec<float>> user_vec(cfg.n_users);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        std::size_t c1 = uniform_index(rng, cfg.n_clusters);
        std::size_t c2 = (c1 + 1 + uniform_index(rng, cfg.n_clusters - 1)) % cfg.n_clusters;
        corpus.user_cluster_pref[u][c1] = 0.7;
        corpus.user_cluster_pref[u][c2] = 0.3;
        for (std::size_t c = 0; c < cfg.n_clusters; ++c)
            corpus.user_pref_subcluster[u][c] =
                static_cast<int>(uniform_index(rng, cfg.n_subclusters));
        user_vec[u] = Vec<float>(cfg.d_c);
        for (auto& x : user_vec[u].d) x = normal<float>(rng, 0.f, 1.f);
    }

    auto sample_cluster = [&](std::size_t u, Rng& r) {
        double x = uniform_real<double>(r, 0.0, 1.0);
        double acc = 0;
        for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
            acc += corpus.user_cluster_pref[u][c];
            if (x < acc) return c;
        }
        return cfg.n_clusters - 1;
    };
    auto sample_item = [&](std::size_t u, std::size_t cluster, Rng& r) {
        int pref_sub = corpus.user_pref_subcluster[u][cluster];
        const auto& pref = members[cluster][pref_sub];
        if (!pref.empty() && uniform_real<double>(r, 0.0, 1.0) < cfg.subcluster_affinity)
            return pref[uniform_index(r, pref.size())];
        std::size_t sub = uniform_index(r, cfg.n_subclusters);
        while (members[cluster][sub].empty()) sub = (sub + 1) % cfg.n_subclusters;
        return members[cluster][sub][uniform_index(r, members[cluster][sub].size())];
    };

    // histories; a search pair occupies two slots. Three <R_I> events and
    // three search pairs are planted up front so every user is eligible for
    // both leave-one-out splits.
    corpus.histories.resize(cfg.n_users);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        Rng ur(derive_seed(cfg.seed, 0x1000 + u));
        auto& h = corpus.histories[u];
        h.user = u;
        std::vector<int> plan;  // 0 = rec event, 1 = search pair
        plan.insert(plan.end(), 3, 0);
        plan.insert(plan.end(), 3, 1);
        std::size_t used = 3 + 3 * 2;
        while (used + 1 < cfg.history_len + 6) {
            if (uniform_real<double>(ur, 0.0, 1.0) < cfg.search_prob && used + 2 <= cfg.history_len + 6) {
                plan.push_back(1);
                used += 2;
            } else {
                plan.push_back(0);
                used += 1;
            }
        }
        std::shuffle(plan.begin(), plan.end(), ur);
        std::uint64_t t = 0;
        for (int kind : plan) {
            std::size_t cluster = sample_cluster(u, ur);
            if (kind == 0) {
                h.events.push_back({Behavior::RecItem, sample_item(u, cluster, ur), t++});
            } else {
                const auto& qs = cluster_queries[cluster];
                std::uint64_t q = qs[uniform_index(ur, qs.size())];
                h.events.push_back({Behavior::SearchQuery, q, t++});
                h.events.push_back({Behavior::SearchItem, sample_item(u, cluster, ur), t++});
            }
        }
    }

    // embeddings. Semantic: centroid + subcluster offset + noise.
    // Collaborative: normalized sum of the vectors of interacting users, so
    // co-occurrence inside preference clusters shapes the geometry.
    std::vector<Vec<float>> collab_sum(cfg.n_items, Vec<float>(cfg.d_c));
    std::vector<std::size_t> collab_count(cfg.n_items, 0);
    for (std::size_t u = 0; u < cfg.n_users; ++u)
        for (const auto& ev : corpus.histories[u].events)
            if (ev.b != Behavior::SearchQuery) {
                collab_sum[ev.payload] += user_vec[u];
                ++collab_count[ev.payload];
            }
    Rng erng(derive_seed(cfg.seed, 0x52));
    corpus.embeddings.resize(cfg.n_items);
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        auto& e = corpus.embeddings[i];
        e.item = i;
        const auto& item = corpus.catalog[i];
        e.semantic = centroid[item.cluster] + sub_offset[item.cluster][item.subcluster];
        for (auto& x : e.semantic.d) x += normal<float>(erng, 0.f, 0.1f);
        e.collaborative = Vec<float>(cfg.d_c);
        if (collab_count[i] > 0) {
            double norm = std::sqrt(squared_norm(collab_sum[i]));
            for (std::size_t j = 0; j < cfg.d_c; ++j)
                e.collaborative[j] = static_cast<float>(collab_sum[i][j] / std::max(norm, 1e-9));
        } else {
            for (auto& x : e.collaborative.d) x = normal<float>(erng, 0.f, 0.5f);
        }
        for (auto& x : e.collaborative.d) x += normal<float>(erng, 0.f, 0.05f);
    }

    // Twin structure. Relistings: same catalog cell, identical semantic
    // embedding, distinct audiences. Interaction clones: adjacent ids live in
    // different clusters, identical collaborative embedding, distinct content.
    std::vector<char> twinned(cfg.n_items, 0);
    std::size_t cell = cfg.n_clusters * cfg.n_subclusters;
    std::size_t sem_pairs =
        static_cast<std::size_t>(cfg.n_items * cfg.sem_twin_frac / 2.0);
    for (std::size_t p = 0, made = 0; p < cfg.n_items && made < sem_pairs; ++p) {
        std::size_t a = p, b = p + cell;
        if (b >= cfg.n_items || twinned[a] || twinned[b]) continue;
        corpus.embeddings[b].semantic = corpus.embeddings[a].semantic;
        twinned[a] = twinned[b] = 1;
        ++made;
    }
    std::size_t col_pairs =
        static_cast<std::size_t>(cfg.n_items * cfg.collab_twin_frac / 2.0);
    if (cfg.n_clusters > 1) {
        for (std::size_t p = 0, made = 0; p + 1 < cfg.n_items && made < col_pairs; ++p) {
            std::size_t a = p, b = p + 1;  // consecutive ids: different clusters
            if (twinned[a] || twinned[b]) continue;
            corpus.embeddings[b].collaborative = corpus.embeddings[a].collaborative;
            twinned[a] = twinned[b] = 1;
            ++made;
        }
    }
    return corpus;
}

SplitResult split(const std::vector<UserHistory>& histories) {
    SplitResult out;
    for (const auto& h : histories) {
        UserSplit us;
        std::vector<std::size_t> rec_idx, search_idx;
        for (std::size_t i = 0; i < h.events.size(); ++i) {
            if (h.events[i].b == Behavior::RecItem) rec_idx.push_back(i);
            if (h.events[i].b == Behavior::SearchItem) {
                if (i == 0 || h.events[i - 1].b != Behavior::SearchQuery)
                    throw ConfigError("history invariant violated: <S_I> without preceding <S_Q>");
                search_idx.push_back(i);
            }
        }
        auto fill = [&out, &h](TaskTargets& t, std::vector<std::size_t>& idx,
                               const char* task) {
            if (idx.size() >= 3) {
                t.test = idx.back();
                t.valid = idx[idx.size() - 2];
                t.train.assign(idx.begin(), idx.end() - 2);
            } else {
                t.train = idx;
                out.exclusions.push_back("user " + std::to_string(h.user) +
                                         " excluded from " + task + " eval (" +
                                         std::to_string(idx.size()) + " targets)");
            }
        };
        fill(us.rec, rec_idx, "recommendation");
        fill(us.search, search_idx, "search");
        // NSQP train targets: queries not attached to valid/test search pairs
        for (std::size_t i = 0; i < h.events.size(); ++i) {
            if (h.events[i].b != Behavior::SearchQuery) continue;
            std::size_t item_idx = i + 1;
            if ((us.search.valid && *us.search.valid == item_idx) ||
                (us.search.test && *us.search.test == item_idx))
                continue;
            us.query_train.push_back(i);
        }
        out.users.emplace(h.user, std::move(us));
    }
    return out;
}

TaskSet parse_task_set(const std::string& csv) {
    TaskSet t;
    t.nrip = t.nsqp = t.nsip = t.desc2id = t.id2desc = false;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "nrip") t.nrip = true;
        else if (tok == "nsqp") t.nsqp = true;
        else if (tok == "nsip") t.nsip = true;
        else if (tok == "desc2id") t.desc2id = true;
        else if (tok == "id2desc") t.id2desc = true;
        else if (!tok.empty()) throw ConfigError("unknown task name: " + tok);
    }
    return t;
}

std::vector<int> render_history(const UserHistory& history, std::size_t end_index,
                                const std::map<std::uint64_t, ItemIdentifier>& ids,
                                const std::map<std::uint64_t, std::vector<int>>& query_words,
                                const TokenVocabulary& vocab, bool behavior_token,
                                std::size_t n_max) {
    std::size_t begin = end_index > n_max ? end_index - n_max : 0;
    std::vector<int> out;
    for (std::size_t i = begin; i < end_index; ++i) {
        const auto& ev = history.events[i];
        std::vector<int> rendered;
        if (ev.b == Behavior::SearchQuery) {
            auto it = query_words.find(ev.payload);
            if (it == query_words.end())
                throw MissingInputError("query id " + std::to_string(ev.payload) +
                                        " has no word mapping");
            rendered = behavior_identifier(vocab, it->second);
        } else {
            auto it = ids.find(ev.payload);
            if (it == ids.end())
                throw MissingInputError("item " + std::to_string(ev.payload) +
                                        " has no identifier");
            rendered = behavior_identifier(vocab, ev.b, it->second);
        }
        std::size_t skip = behavior_token ? 0 : 1;
        out.insert(out.end(), rendered.begin() + skip, rendered.end());
    }
    return out;
}

std::vector<InstructionExample> build_instructions(
    const std::vector<UserHistory>& histories, const SplitResult& splits,
    const std::map<std::uint64_t, ItemIdentifier>& ids,
    const std::vector<CatalogItem>& catalog, const std::vector<QueryInfo>& queries,
    const TokenVocabulary& vocab, const TaskSet& tasks, std::size_t n_max) {
    auto qwords = query_word_map(queries, vocab);
    std::vector<InstructionExample> out;
    auto item_identifier = [&ids](std::uint64_t item) -> const ItemIdentifier& {
        auto it = ids.find(item);
        if (it == ids.end())
            throw MissingInputError("item " + std::to_string(item) +
                                    " has no identifier");
        return it->second;
    };
    auto strip = [&tasks](std::vector<int> seq) {
        if (!tasks.behavior_token) seq.erase(seq.begin());
        return seq;
    };
    for (const auto& h : histories) {
        const auto& us = splits.users.at(h.user);
        if (tasks.nrip)
            for (std::size_t idx : us.rec.train) {
                InstructionExample ex;
                ex.task = "NRIP";
                ex.instruction = render_history(h, idx, ids, qwords, vocab,
                                                tasks.behavior_token, n_max);
                ex.response = strip(behavior_identifier(
                    vocab, Behavior::RecItem, item_identifier(h.events[idx].payload)));
                if (ex.instruction.empty()) continue;  // target opens the history
                out.push_back(std::move(ex));
            }
        if (tasks.nsqp)
            for (std::size_t idx : us.query_train) {
                InstructionExample ex;
                ex.task = "NSQP";
                ex.instruction = render_history(h, idx, ids, qwords, vocab,
                                                tasks.behavior_token, n_max);
                ex.response = strip(behavior_identifier(vocab, qwords.at(h.events[idx].payload)));
                if (ex.instruction.empty()) continue;
                out.push_back(std::move(ex));
            }
        if (tasks.nsip)
            for (std::size_t idx : us.search.train) {
                InstructionExample ex;
                ex.task = "NSIP";
                // history up to and including the current query
                ex.instruction = render_history(h, idx, ids, qwords, vocab,
                                                tasks.behavior_token, n_max);
                ex.response = strip(behavior_identifier(
                    vocab, Behavior::SearchItem, item_identifier(h.events[idx].payload)));
                out.push_back(std::move(ex));
            }
    }
    // alignment tasks: one example per identifier kind per item, no behavior
    // token on either side
    if (tasks.desc2id || tasks.id2desc)
        for (const auto& item : catalog) {
            if (item.description.empty())
                throw ConfigError("item " + std::to_string(item.id) +
                                  " has empty description");
            const auto& id = item_identifier(item.id);
            std::vector<int> desc = vocab.tokenize_query(item.description);
            for (const auto* tokens : {&id.semantic_tokens, &id.collab_tokens}) {
                if (tasks.desc2id)
                    out.push_back({"Desc2ID", desc, *tokens});
                if (tasks.id2desc)
                    out.push_back({"ID2Desc", *tokens, desc});
            }
        }
    return out;
}

std::vector<std::string> collect_words(const std::vector<CatalogItem>& catalog,
                                       const std::vector<QueryInfo>& queries) {
    std::vector<std::string> words;
    auto add_text = [&words](const std::string& text) {
        std::istringstream is(text);
        std::string w;
        while (is >> w) words.push_back(w);
    };
    for (const auto& q : queries) add_text(q.text);
    for (const auto& item : catalog) add_text(item.description);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    return words;
}

std::vector<std::string> collect_words(const SynthCorpus& corpus) {
    return collect_words(corpus.catalog, corpus.queries);
}

std::map<std::uint64_t, std::vector<int>> query_word_map(
    const std::vector<QueryInfo>& queries, const TokenVocabulary& vocab) {
    std::map<std::uint64_t, std::vector<int>> out;
    for (const auto& q : queries) out[q.id] = vocab.tokenize_query(q.text);
    return out;
}

// --- file IO ---------------------------------------------------------------

void write_embeddings(const std::string& path,
                      const std::vector<ItemEmbeddingPair<float>>& items,
                      std::size_t d_s, std::size_t d_c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingInputError("cannot write embeddings: " + path);
    out << "GSEB v1 " << items.size() << ' ' << d_s << ' ' << d_c << '\n';
    for (const auto& it : items) {
        if (it.semantic.size() != d_s || it.collaborative.size() != d_c)
            throw DimensionError("embedding record dims mismatch header");
        out.write(reinterpret_cast<const char*>(&it.item), sizeof(it.item));
        out.write(reinterpret_cast<const char*>(it.semantic.data()),
                  static_cast<std::streamsize>(d_s * sizeof(float)));
        out.write(reinterpret_cast<const char*>(it.collaborative.data()),
                  static_cast<std::streamsize>(d_c * sizeof(float)));
    }
}

std::vector<ItemEmbeddingPair<float>> read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot read embeddings: " + path);
    std::string magic, version;
    std::size_t n, d_s, d_c;
    in >> magic >> version >> n >> d_s >> d_c;
    if (magic != "GSEB" || version != "v1")
        throw ConfigError("bad embedding file header: " + path);
    in.ignore(1);  // newline
    std::vector<ItemEmbeddingPair<float>> items(n);
    for (auto& it : items) {
        in.read(reinterpret_cast<char*>(&it.item), sizeof(it.item));
        it.semantic = Vec<float>(d_s);
        it.collaborative = Vec<float>(d_c);
        in.read(reinterpret_cast<char*>(it.semantic.data()),
                static_cast<std::streamsize>(d_s * sizeof(float)));
        in.read(reinterpret_cast<char*>(it.collaborative.data()),
                static_cast<std::streamsize>(d_c * sizeof(float)));
        if (!in) throw ConfigError("truncated embedding file: " + path);
    }
    return items;
}

void write_histories(const std::string& path, const std::vector<UserHistory>& histories) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write histories: " + path);
    for (const auto& h : histories) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : h.events)
            events.push_back({{"b", behavior_token_string(ev.b)},
                              {"x", ev.payload},
                              {"t", ev.t}});
        nlohmann::json j{{"user", h.user}, {"events", events}};
        out << j.dump() << '\n';
    }
}

std::vector<UserHistory> read_histories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read histories: " + path);
    std::vector<UserHistory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        UserHistory h;
        h.user = j.at("user");
        for (const auto& ev : j.at("events"))
            h.events.push_back({behavior_from_string(ev.at("b")), ev.at("x"), ev.at("t")});
        out.push_back(std::move(h));
    }
    return out;
}

void write_catalog(const std::string& path, const std::vector<CatalogItem>& catalog) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write catalog: " + path);
    for (const auto& item : catalog) {
        nlohmann::json j{{"item", item.id},
                         {"description", item.description},
                         {"cluster", item.cluster},
                         {"subcluster", item.subcluster}};
        out << j.dump() << '\n';
    }
}

std::vector<CatalogItem> read_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read catalog: " + path);
    std::vector<CatalogItem> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        CatalogItem item;
        item.id = j.at("item");
        item.description = j.at("description");
        item.cluster = j.at("cluster");
        item.subcluster = j.value("subcluster", 0);
        out.push_back(std::move(item));
    }
    return out;
}

void write_queries(const std::string& path, const std::vector<QueryInfo>& queries) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write queries: " + path);
    for (const auto& q : queries) {
        nlohmann::json j{{"query", q.id}, {"text", q.text}, {"cluster", q.cluster}};
        out << j.dump() << '\n';
    }
}

std::vector<QueryInfo> read_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read queries: " + path);
    std::vector<QueryInfo> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        out.push_back({j.at("query"), j.at("text"), j.at("cluster")});
    }
    return out;
}

void write_identifiers(const std::string& path,
                       const std::vector<ItemIdentifierCodes<float>>& ids) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write identifiers: " + path);
    for (const auto& id : ids) {
        nlohmann::json j{{"item", id.item},
                         {"shared", id.shared},
                         {"semantic", id.semantic},
                         {"collab", id.collab}};
        out << j.dump() << '\n';
    }
}

std::vector<ItemIdentifierCodes<float>> read_identifiers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read identifiers: " + path);
    std::vector<ItemIdentifierCodes<float>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        ItemIdentifierCodes<float> id;
        id.item = j.at("item");
        id.shared = j.at("shared").get<std::vector<std::size_t>>();
        id.semantic = j.at("semantic").get<std::vector<std::size_t>>();
        id.collab = j.at("collab").get<std::vector<std::size_t>>();
        out.push_back(std::move(id));
    }
    return out;
}

void write_instructions(const std::string& path,
                        const std::vector<InstructionExample>& examples) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write instructions: " + path);
    for (const auto& ex : examples) {
        nlohmann::json j{{"task", ex.task},
                         {"instruction", ex.instruction},
                         {"response", ex.response}};
        out << j.dump() << '\n';
    }
}

std::vector<InstructionExample> read_instructions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read instructions: " + path);
    std::vector<InstructionExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        InstructionExample ex;
        ex.task = j.at("task");
        ex.instruction = j.at("instruction").get<std::vector<int>>();
        ex.response = j.at("response").get<std::vector<int>>();
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace gensar
