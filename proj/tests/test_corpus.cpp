#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "gensar/corpus.hpp"

using namespace gensar;

namespace {

SynthConfig tiny_cfg() {
    SynthConfig cfg;
    cfg.n_users = 30;
    cfg.n_items = 60;
    cfg.n_queries = 8;
    cfg.n_clusters = 4;
    cfg.n_subclusters = 3;
    cfg.history_len = 12;
    cfg.d_s = 8;
    cfg.d_c = 8;
    cfg.seed = 3;
    return cfg;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// fixed two-item vocabulary + identifiers used by the rendering tests
struct Fixture {
    TokenVocabulary vocab{1, 1, 4, {"find", "kc0", "q0"}};
    std::map<std::uint64_t, ItemIdentifier> ids;
    std::map<std::uint64_t, std::vector<int>> qwords;

    Fixture() {
        ids[10] = make_item_identifier(vocab, 10, {0}, {1}, {2});
        ids[11] = make_item_identifier(vocab, 11, {3}, {0}, {1});
        qwords[5] = vocab.tokenize_query("find kc0 q0");
    }
};

}  // namespace

TEST_CASE("synthetic corpus satisfies its invariants") {
    auto cfg = tiny_cfg();
    auto corpus = generate_synthetic(cfg);
    REQUIRE(corpus.catalog.size() == cfg.n_items);
    REQUIRE(corpus.queries.size() == cfg.n_queries);
    REQUIRE(corpus.histories.size() == cfg.n_users);
    REQUIRE(corpus.embeddings.size() == cfg.n_items);

    for (const auto& item : corpus.catalog) {
        CHECK(item.cluster == static_cast<int>(item.id % cfg.n_clusters));
        CHECK(!item.description.empty());
    }
    for (const auto& e : corpus.embeddings) {
        CHECK(e.semantic.size() == cfg.d_s);
        CHECK(e.collaborative.size() == cfg.d_c);
        CHECK(e.semantic.finite());
        CHECK(e.collaborative.finite());
    }
    for (const auto& h : corpus.histories) {
        std::size_t recs = 0, pairs = 0;
        for (std::size_t i = 0; i < h.events.size(); ++i) {
            const auto& ev = h.events[i];
            CHECK(ev.t == i);  // timestamps are ordinals
            if (ev.b == Behavior::SearchItem) {
                REQUIRE(i > 0);
                // every click follows its query and matches its cluster
                CHECK(h.events[i - 1].b == Behavior::SearchQuery);
                int qc = corpus.queries[h.events[i - 1].payload].cluster;
                CHECK(corpus.catalog[ev.payload].cluster == qc);
                ++pairs;
            }
            if (ev.b == Behavior::RecItem) ++recs;
        }
        // three of each planted, so both splits stay populated
        CHECK(recs >= 3);
        CHECK(pairs >= 3);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    auto cfg = tiny_cfg();
    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        REQUIRE(a.histories[u].events.size() == b.histories[u].events.size());
        for (std::size_t i = 0; i < a.histories[u].events.size(); ++i)
            CHECK(a.histories[u].events[i].payload == b.histories[u].events[i].payload);
    }
    for (std::size_t i = 0; i < cfg.n_items; ++i)
        CHECK(squared_distance(a.embeddings[i].semantic, b.embeddings[i].semantic) == 0.f);
    cfg.seed = 4;
    auto c = generate_synthetic(cfg);
    bool differs = false;
    for (std::size_t u = 0; u < cfg.n_users && !differs; ++u)
        differs = a.histories[u].events.size() != c.histories[u].events.size() ||
                  a.histories[u].events[0].payload != c.histories[u].events[0].payload;
    CHECK(differs);
}

TEST_CASE("synth config validation") {
    auto cfg = tiny_cfg();
    cfg.n_clusters = cfg.n_items + 1;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg = tiny_cfg();
    cfg.n_queries = cfg.n_clusters - 1;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg = tiny_cfg();
    cfg.history_len = 2;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("split holds out the last two targets per task") {
    UserHistory h;
    h.user = 1;
    // R R Q I R Q I Q I  (rec indices 0,1,4; search-item indices 3,6,8)
    h.events = {{Behavior::RecItem, 10, 0},     {Behavior::RecItem, 11, 1},
                {Behavior::SearchQuery, 5, 2},  {Behavior::SearchItem, 12, 3},
                {Behavior::RecItem, 13, 4},     {Behavior::SearchQuery, 6, 5},
                {Behavior::SearchItem, 14, 6},  {Behavior::SearchQuery, 7, 7},
                {Behavior::SearchItem, 15, 8}};
    auto res = split({h});
    const auto& us = res.users.at(1);
    CHECK(us.rec.train == std::vector<std::size_t>{0});
    REQUIRE(us.rec.valid.has_value());
    CHECK(*us.rec.valid == 1);
    REQUIRE(us.rec.test.has_value());
    CHECK(*us.rec.test == 4);
    CHECK(us.search.train == std::vector<std::size_t>{3});
    CHECK(*us.search.valid == 6);
    CHECK(*us.search.test == 8);
    // NSQP keeps only the query of the train search pair
    CHECK(us.query_train == std::vector<std::size_t>{2});
    CHECK(res.exclusions.empty());
}

TEST_CASE("split excludes users with too few targets and logs it") {
    UserHistory h;
    h.user = 9;
    h.events = {{Behavior::RecItem, 1, 0},
                {Behavior::RecItem, 2, 1},
                {Behavior::SearchQuery, 0, 2},
                {Behavior::SearchItem, 3, 3}};
    auto res = split({h});
    const auto& us = res.users.at(9);
    CHECK(!us.rec.test.has_value());
    CHECK(!us.search.test.has_value());
    CHECK(us.rec.train.size() == 2);
    REQUIRE(res.exclusions.size() == 2);
    CHECK(res.exclusions[0].find("user 9") != std::string::npos);
}

TEST_CASE("split rejects a click without its query") {
    UserHistory h;
    h.user = 2;
    h.events = {{Behavior::SearchItem, 1, 0}};
    CHECK_THROWS_AS(split({h}), ConfigError);
}

TEST_CASE("render_history interleaves behaviors in event order") {
    Fixture f;
    UserHistory h;
    h.user = 0;
    h.events = {{Behavior::RecItem, 10, 0},
                {Behavior::SearchQuery, 5, 1},
                {Behavior::SearchItem, 11, 2}};
    auto out = render_history(h, 3, f.ids, f.qwords, f.vocab, true, 20);
    std::vector<int> want;
    want.push_back(f.vocab.behavior_id(Behavior::RecItem));
    auto& id10 = f.ids.at(10);
    want.insert(want.end(), id10.collab_tokens.begin(), id10.collab_tokens.end());
    want.push_back(f.vocab.behavior_id(Behavior::SearchQuery));
    want.insert(want.end(), f.qwords.at(5).begin(), f.qwords.at(5).end());
    want.push_back(f.vocab.behavior_id(Behavior::SearchItem));
    auto& id11 = f.ids.at(11);
    want.insert(want.end(), id11.semantic_tokens.begin(), id11.semantic_tokens.end());
    CHECK(out == want);

    // dropping behavior tokens removes exactly one token per event
    auto bare = render_history(h, 3, f.ids, f.qwords, f.vocab, false, 20);
    CHECK(bare.size() == out.size() - 3);
    CHECK(std::find(bare.begin(), bare.end(),
                    f.vocab.behavior_id(Behavior::RecItem)) == bare.end());
}

TEST_CASE("render_history truncates to the most recent n_max events") {
    Fixture f;
    UserHistory h;
    h.user = 0;
    for (int i = 0; i < 6; ++i)
        h.events.push_back({Behavior::RecItem, static_cast<std::uint64_t>(10 + (i % 2)),
                            static_cast<std::uint64_t>(i)});
    auto full = render_history(h, 6, f.ids, f.qwords, f.vocab, true, 20);
    auto cut = render_history(h, 6, f.ids, f.qwords, f.vocab, true, 2);
    // each rec event renders 1 behavior + 2 code tokens
    CHECK(full.size() == 6 * 3);
    CHECK(cut.size() == 2 * 3);
    CHECK(std::equal(cut.begin(), cut.end(), full.end() - 6));
    CHECK(render_history(h, 0, f.ids, f.qwords, f.vocab, true, 20).empty());
}

TEST_CASE("render_history reports missing identifiers and queries") {
    Fixture f;
    UserHistory h;
    h.user = 0;
    h.events = {{Behavior::RecItem, 999, 0}};
    CHECK_THROWS_AS(render_history(h, 1, f.ids, f.qwords, f.vocab, true, 20),
                    MissingInputError);
    h.events = {{Behavior::SearchQuery, 999, 0}};
    CHECK_THROWS_AS(render_history(h, 1, f.ids, f.qwords, f.vocab, true, 20),
                    MissingInputError);
}

TEST_CASE("parse_task_set enables exactly the named tasks") {
    auto t = parse_task_set("nrip,desc2id");
    CHECK(t.nrip);
    CHECK(t.desc2id);
    CHECK(!t.nsqp);
    CHECK(!t.nsip);
    CHECK(!t.id2desc);
    CHECK(t.behavior_token);
    CHECK_THROWS_AS(parse_task_set("nrip,bogus"), ConfigError);
}

TEST_CASE("build_instructions emits the expected tasks with correct targets") {
    auto cfg = tiny_cfg();
    auto corpus = generate_synthetic(cfg);
    TokenVocabulary vocab(1, 1, 8, collect_words(corpus));
    std::map<std::uint64_t, ItemIdentifier> ids;
    for (const auto& item : corpus.catalog)
        ids[item.id] = make_item_identifier(
            vocab, item.id, {item.id % 8}, {(item.id / 8) % 8}, {(item.id / 64) % 8});
    auto splits = split(corpus.histories);
    TaskSet tasks;
    auto examples = build_instructions(corpus.histories, splits, ids, corpus.catalog,
                                       corpus.queries, vocab, tasks);
    std::set<std::string> seen;
    for (const auto& ex : examples) {
        seen.insert(ex.task);
        CHECK(!ex.instruction.empty());
        CHECK(!ex.response.empty());
        if (ex.task == "NRIP") {
            CHECK(ex.response[0] == vocab.behavior_id(Behavior::RecItem));
            CHECK(ex.response.size() == 3);  // behavior + L_m + L_n
        } else if (ex.task == "NSIP") {
            CHECK(ex.response[0] == vocab.behavior_id(Behavior::SearchItem));
            // instruction ends in the current query's words
            bool has_query_tail = false;
            for (int tok : ex.instruction)
                has_query_tail |= vocab.is_word(tok);
            CHECK(has_query_tail);
        } else if (ex.task == "NSQP") {
            CHECK(ex.response[0] == vocab.behavior_id(Behavior::SearchQuery));
            for (std::size_t i = 1; i < ex.response.size(); ++i)
                CHECK(vocab.is_word(ex.response[i]));
        } else if (ex.task == "Desc2ID") {
            for (int tok : ex.response) CHECK(vocab.is_code(tok));
        } else if (ex.task == "ID2Desc") {
            for (int tok : ex.instruction) CHECK(vocab.is_code(tok));
            for (int tok : ex.response) CHECK(vocab.is_word(tok));
        }
    }
    CHECK(seen == std::set<std::string>{"NRIP", "NSQP", "NSIP", "Desc2ID", "ID2Desc"});

    // alignment tasks: two examples (semantic + collab identifier) per item
    std::size_t n_d2i = 0;
    for (const auto& ex : examples) n_d2i += (ex.task == "Desc2ID");
    CHECK(n_d2i == 2 * cfg.n_items);

    // task filtering drops exactly the disabled tasks
    TaskSet only = parse_task_set("nrip");
    auto few = build_instructions(corpus.histories, splits, ids, corpus.catalog,
                                  corpus.queries, vocab, only);
    for (const auto& ex : few) CHECK(ex.task == "NRIP");

    // no-behavior-token ablation removes behavior ids everywhere
    TaskSet bare;
    bare.behavior_token = false;
    auto stripped = build_instructions(corpus.histories, splits, ids, corpus.catalog,
                                       corpus.queries, vocab, bare);
    for (const auto& ex : stripped) {
        for (int tok : ex.instruction) CHECK(!vocab.is_behavior(tok));
        for (int tok : ex.response) CHECK(!vocab.is_behavior(tok));
    }
}

TEST_CASE("collect_words is the sorted unique closure of corpus text") {
    std::vector<CatalogItem> catalog{{0, "red shoe", 0, 0}, {1, "blue shoe", 0, 0}};
    std::vector<QueryInfo> queries{{0, "find shoe", 0}};
    auto words = collect_words(catalog, queries);
    CHECK(words == std::vector<std::string>{"blue", "find", "red", "shoe"});
}

TEST_CASE("embedding file round-trip is bit-exact") {
    auto cfg = tiny_cfg();
    auto corpus = generate_synthetic(cfg);
    auto path = temp_path("gensar_test_emb.gseb");
    write_embeddings(path, corpus.embeddings, cfg.d_s, cfg.d_c);
    auto back = read_embeddings(path);
    REQUIRE(back.size() == corpus.embeddings.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].item == corpus.embeddings[i].item);
        CHECK(back[i].semantic.d == corpus.embeddings[i].semantic.d);
        CHECK(back[i].collaborative.d == corpus.embeddings[i].collaborative.d);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_embeddings(path), MissingInputError);
}

TEST_CASE("jsonl round-trips: histories, catalog, queries, identifiers, instructions") {
    auto cfg = tiny_cfg();
    auto corpus = generate_synthetic(cfg);

    auto hp = temp_path("gensar_test_hist.jsonl");
    write_histories(hp, corpus.histories);
    auto hs = read_histories(hp);
    REQUIRE(hs.size() == corpus.histories.size());
    for (std::size_t u = 0; u < hs.size(); ++u) {
        CHECK(hs[u].user == corpus.histories[u].user);
        REQUIRE(hs[u].events.size() == corpus.histories[u].events.size());
        for (std::size_t i = 0; i < hs[u].events.size(); ++i) {
            CHECK(hs[u].events[i].b == corpus.histories[u].events[i].b);
            CHECK(hs[u].events[i].payload == corpus.histories[u].events[i].payload);
        }
    }
    std::filesystem::remove(hp);

    auto cp = temp_path("gensar_test_cat.jsonl");
    write_catalog(cp, corpus.catalog);
    auto cs = read_catalog(cp);
    REQUIRE(cs.size() == corpus.catalog.size());
    CHECK(cs[5].description == corpus.catalog[5].description);
    CHECK(cs[5].cluster == corpus.catalog[5].cluster);
    std::filesystem::remove(cp);

    auto qp = temp_path("gensar_test_q.jsonl");
    write_queries(qp, corpus.queries);
    auto qs = read_queries(qp);
    REQUIRE(qs.size() == corpus.queries.size());
    CHECK(qs[3].text == corpus.queries[3].text);
    std::filesystem::remove(qp);

    std::vector<ItemIdentifierCodes<float>> ids(2);
    ids[0].item = 4;
    ids[0].shared = {1, 2};
    ids[0].semantic = {3};
    ids[0].collab = {0};
    ids[1].item = 9;
    ids[1].shared = {0, 0};
    ids[1].semantic = {7};
    ids[1].collab = {7};
    auto ip = temp_path("gensar_test_ids.jsonl");
    write_identifiers(ip, ids);
    auto is = read_identifiers(ip);
    REQUIRE(is.size() == 2);
    CHECK(is[0].shared == ids[0].shared);
    CHECK(is[1].collab == ids[1].collab);
    std::filesystem::remove(ip);

    std::vector<InstructionExample> exs{{"NRIP", {4, 8, 9}, {4, 10, 11}},
                                        {"NSQP", {6, 8}, {5, 20}}};
    auto xp = temp_path("gensar_test_instr.jsonl");
    write_instructions(xp, exs);
    auto back = read_instructions(xp);
    REQUIRE(back.size() == 2);
    CHECK(back[0].task == "NRIP");
    CHECK(back[0].instruction == exs[0].instruction);
    CHECK(back[1].response == exs[1].response);
    std::filesystem::remove(xp);
}
