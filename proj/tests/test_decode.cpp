#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "gensar/decode.hpp"
#include "gensar/rng.hpp"

using namespace gensar;

namespace {

SeqModelConfig<double> micro_cfg(std::size_t vocab = 24) {
    SeqModelConfig<double> cfg;
    cfg.vocab = vocab;
    cfg.dim = 8;
    cfg.n_enc = 1;
    cfg.n_dec = 1;
    cfg.heads = 2;
    cfg.ffn = 12;
    cfg.max_src = 12;
    cfg.max_tgt = 8;
    cfg.seed = 17;
    return cfg;
}

SeqModel<double> random_model(std::size_t vocab, std::uint64_t seed) {
    SeqModel<double> model(micro_cfg(vocab));
    Rng rng(seed);
    for (auto& p : model.params()) p += normal<double>(rng, 0.0, 0.3);
    return model;
}

// brute-force oracle: score every identifier by teacher forcing
std::vector<DecodedItem> enumerate_all(const SeqModel<double>& model,
                                       const std::vector<int>& instruction,
                                       int behavior_token, const IdentifierTrie& trie) {
    auto enc = model.encode_source(instruction);
    std::vector<DecodedItem> out;
    for (const auto& [seq, items] : trie.all_paths()) {
        std::vector<int> full;
        if (behavior_token >= 0) full.push_back(behavior_token);
        full.insert(full.end(), seq.begin(), seq.end());
        double score = model.sequence_log_prob(enc, full);
        std::vector<std::uint64_t> sorted_items(items);
        std::sort(sorted_items.begin(), sorted_items.end());
        for (std::uint64_t it : sorted_items) out.push_back({it, score, full});
    }
    std::sort(out.begin(), out.end(), [](const DecodedItem& a, const DecodedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.tokens != b.tokens) return a.tokens < b.tokens;
        return a.item < b.item;
    });
    return out;
}

}  // namespace

TEST_CASE("single-identifier trie always decodes that identifier") {
    auto model = random_model(24, 1);
    IdentifierTrie trie;
    trie.insert({10, 11, 12}, 77);
    auto out = constrained_beam_search(model, {4, 5}, 6, trie, 4, 3);
    REQUIRE(out.size() == 1);
    CHECK(out[0].item == 77);
    CHECK(out[0].tokens == std::vector<int>{6, 10, 11, 12});
}

TEST_CASE("uniform model breaks ties lexicographically on token ids") {
    auto cfg = micro_cfg(24);
    SeqModel<double> model(cfg);
    std::fill(model.params().begin(), model.params().end(), 0.0);  // uniform
    IdentifierTrie trie;
    trie.insert({4, 5}, 40);
    trie.insert({4, 3}, 41);
    trie.insert({1, 9}, 42);
    auto out = constrained_beam_search(model, {7}, -1, trie, 8, 3);
    REQUIRE(out.size() == 3);
    // all scores equal; ordering must follow token sequences [1,9] < [4,3] < [4,5]
    CHECK(out[0].item == 42);
    CHECK(out[1].item == 41);
    CHECK(out[2].item == 40);
    CHECK(out[0].score == doctest::Approx(out[2].score));
}

TEST_CASE("full-width beam equals brute-force enumeration") {
    auto model = random_model(30, 2);
    Rng rng(5);
    IdentifierTrie trie;
    std::set<std::vector<int>> used;
    std::uint64_t item = 100;
    while (used.size() < 12) {
        std::vector<int> seq{static_cast<int>(8 + uniform_index(rng, 4)),
                             static_cast<int>(12 + uniform_index(rng, 4)),
                             static_cast<int>(16 + uniform_index(rng, 4))};
        if (!used.insert(seq).second) continue;
        trie.insert(seq, item++);
    }
    std::vector<int> instruction{4, 9, 13};
    for (int behavior : {-1, 6}) {
        auto want = enumerate_all(model, instruction, behavior, trie);
        auto got = constrained_beam_search(model, instruction, behavior, trie,
                                           /*beam_width=*/64, want.size());
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].item == want[i].item);
            CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
            CHECK(got[i].tokens == want[i].tokens);
        }
    }
}

TEST_CASE("narrow beams return a subset of the brute-force ranking prefix") {
    auto model = random_model(30, 3);
    Rng rng(6);
    IdentifierTrie trie;
    std::set<std::vector<int>> used;
    std::uint64_t item = 0;
    while (used.size() < 10) {
        std::vector<int> seq{static_cast<int>(8 + uniform_index(rng, 3)),
                             static_cast<int>(12 + uniform_index(rng, 5))};
        if (!used.insert(seq).second) continue;
        trie.insert(seq, item++);
    }
    auto full = constrained_beam_search(model, {5}, -1, trie, 64, 3);
    auto narrow = constrained_beam_search(model, {5}, -1, trie, 3, 3);
    // beam width 3 over depth-2 identifiers cannot lose the global top-1
    REQUIRE(!narrow.empty());
    CHECK(narrow[0].item == full[0].item);
}

TEST_CASE("every decode stays inside the trie") {
    auto vocabless = micro_cfg(40);
    Rng seeds(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto model = random_model(40, derive_seed(99, trial));
        Rng rng(derive_seed(7, trial));
        IdentifierTrie trie;
        std::set<std::vector<int>> valid;
        std::uint64_t item = 0;
        std::size_t n_ids = 3 + uniform_index(rng, 10);
        while (valid.size() < n_ids) {
            std::vector<int> seq{static_cast<int>(8 + uniform_index(rng, 5)),
                                 static_cast<int>(14 + uniform_index(rng, 5)),
                                 static_cast<int>(20 + uniform_index(rng, 5))};
            if (!valid.insert(seq).second) continue;
            trie.insert(seq, item++);
        }
        std::vector<int> instruction{static_cast<int>(4 + uniform_index(rng, 3)),
                                     static_cast<int>(4 + uniform_index(rng, 3))};
        auto out = constrained_beam_search(model, instruction, 5, trie, 4, n_ids);
        CHECK(!out.empty());
        for (const auto& d : out) {
            REQUIRE(d.tokens.size() == 4);
            CHECK(d.tokens[0] == 5);
            std::vector<int> id(d.tokens.begin() + 1, d.tokens.end());
            CHECK(valid.count(id) == 1);
        }
    }
}

TEST_CASE("identifier collisions emit every item in id order with one score") {
    auto model = random_model(24, 4);
    IdentifierTrie trie;
    trie.insert({10, 11}, 9);
    trie.insert({10, 11}, 3);
    trie.insert({12, 13}, 5);
    auto out = constrained_beam_search(model, {4}, -1, trie, 8, 4);
    REQUIRE(out.size() == 3);
    std::size_t pair_at = out[0].tokens == std::vector<int>{10, 11} ? 0 : 1;
    if (pair_at == 1) REQUIRE(out[0].item == 5);
    CHECK(out[pair_at].item == 3);
    CHECK(out[pair_at + 1].item == 9);
    CHECK(out[pair_at].score == out[pair_at + 1].score);
}

TEST_CASE("beam search validates its inputs") {
    auto model = random_model(24, 5);
    IdentifierTrie trie;
    trie.insert({10}, 1);
    CHECK_THROWS_AS(constrained_beam_search(model, {4}, -1, trie, 0, 1), ConfigError);
    IdentifierTrie empty;
    CHECK_THROWS_AS(constrained_beam_search(model, {4}, -1, empty, 4, 1), ConfigError);
}

TEST_CASE("score_candidates agrees with beam scores and sorts stably") {
    auto model = random_model(30, 6);
    IdentifierTrie trie;
    std::vector<std::pair<std::uint64_t, std::vector<int>>> candidates;
    Rng rng(8);
    std::set<std::vector<int>> used;
    std::uint64_t item = 50;
    while (used.size() < 8) {
        std::vector<int> seq{static_cast<int>(8 + uniform_index(rng, 4)),
                             static_cast<int>(12 + uniform_index(rng, 6))};
        if (!used.insert(seq).second) continue;
        trie.insert(seq, item);
        candidates.emplace_back(item, seq);
        ++item;
    }
    std::vector<int> instruction{5, 6};
    auto scored = score_candidates(model, instruction, 4, candidates);
    auto beam = constrained_beam_search(model, instruction, 4, trie, 64, 8);
    REQUIRE(scored.size() == beam.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
        CHECK(scored[i].first == beam[i].item);
        CHECK(scored[i].second == doctest::Approx(beam[i].score).epsilon(1e-9));
    }
    for (std::size_t i = 1; i < scored.size(); ++i)
        CHECK(scored[i - 1].second >= scored[i].second);

    candidates[0].second.clear();
    CHECK_THROWS_AS(score_candidates(model, instruction, 4, candidates), ConfigError);
}
