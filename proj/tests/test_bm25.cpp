#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gensar/bm25.hpp"
#include "gensar/error.hpp"

using namespace gensar;

namespace {

// Independent Okapi computation over a fixed five-document corpus.
double okapi_oracle(const std::vector<std::vector<std::string>>& docs,
                    const std::vector<std::string>& query, std::size_t doc,
                    double k1 = 1.2, double b = 0.75) {
    double n = static_cast<double>(docs.size());
    double avg_len = 0;
    for (const auto& d : docs) avg_len += static_cast<double>(d.size());
    avg_len /= n;
    double score = 0;
    for (const auto& term : query) {
        double df = 0;
        for (const auto& d : docs)
            df += std::find(d.begin(), d.end(), term) != d.end() ? 1.0 : 0.0;
        double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        double tf = static_cast<double>(
            std::count(docs[doc].begin(), docs[doc].end(), term));
        double len = static_cast<double>(docs[doc].size());
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg_len));
    }
    return score;
}

const std::vector<std::vector<std::string>> kDocs{
    {"grand", "piano", "for", "sale"},
    {"electric", "guitar", "with", "amp", "for", "sale"},
    {"acoustic", "guitar", "strings"},
    {"piano", "piano", "lessons"},
    {"vintage", "amp", "repair", "service", "manual", "included"}};

Bm25Index build_index() {
    Bm25Index index;
    for (std::size_t i = 0; i < kDocs.size(); ++i) {
        std::string text;
        for (const auto& w : kDocs[i]) {
            if (!text.empty()) text += ' ';
            text += w;
        }
        index.add_document(i, text);
    }
    return index;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace") {
    auto toks = Bm25Index::tokenize("  grand   piano\tfor sale\n");
    CHECK(toks == std::vector<std::string>{"grand", "piano", "for", "sale"});
    CHECK(Bm25Index::tokenize("").empty());
}

TEST_CASE("scores match the hand-rolled Okapi oracle") {
    auto index = build_index();
    std::vector<std::vector<std::string>> queries{
        {"piano"}, {"guitar"}, {"piano", "lessons"}, {"amp", "for", "sale"}};
    for (const auto& q : queries)
        for (std::size_t d = 0; d < kDocs.size(); ++d)
            CHECK(index.score(q, d) == doctest::Approx(okapi_oracle(kDocs, q, d))
                                           .epsilon(1e-6));
}

TEST_CASE("absent terms score zero; repeated terms saturate") {
    auto index = build_index();
    CHECK(index.score({"zither"}, 0) == doctest::Approx(0.0));
    // doc 3 has tf=2 for "piano": higher than doc 0's single occurrence
    // after the oracle's length normalization
    CHECK(index.score({"piano"}, 3) == doctest::Approx(okapi_oracle(kDocs, {"piano"}, 3)));
    CHECK(index.score({"piano"}, 3) > index.score({"piano"}, 0));
}

TEST_CASE("unknown document and duplicate insertion are rejected") {
    auto index = build_index();
    CHECK_THROWS_AS(index.score({"piano"}, 99), ConfigError);
    CHECK_THROWS_AS(index.add_document(0, "again"), ConfigError);
}

TEST_CASE("top_negatives ranks by score and excludes the ground truth") {
    auto index = build_index();
    Rng rng(1);
    // query "piano": docs 3 and 0 score positive; ground truth 3 is excluded
    auto negs = index.top_negatives({"piano"}, 3, 2, rng);
    REQUIRE(negs.size() == 2);
    CHECK(negs[0] == 0);  // the only other positive-scoring doc comes first
    CHECK(std::find(negs.begin(), negs.end(), 3) == negs.end());
}

TEST_CASE("padding fills with random documents and reports the count") {
    auto index = build_index();
    Rng rng(2);
    std::size_t padded = 0;
    auto negs = index.top_negatives({"guitar"}, 2, 4, rng, &padded);
    REQUIRE(negs.size() == 4);
    // one positive match (doc 1) remains after excluding gt 2 -> 3 random pads
    CHECK(padded == 3);
    CHECK(negs[0] == 1);
    std::set<std::uint64_t> unique(negs.begin(), negs.end());
    CHECK(unique.size() == 4);
    CHECK(unique.count(2) == 0);
}

TEST_CASE("empty query falls back to all-random negatives") {
    auto index = build_index();
    Rng rng(3);
    std::size_t padded = 0;
    auto negs = index.top_negatives({}, 0, 3, rng, &padded);
    REQUIRE(negs.size() == 3);
    CHECK(padded == 3);
    CHECK(std::find(negs.begin(), negs.end(), 0) == negs.end());
}

TEST_CASE("asking for more negatives than the corpus allows fails") {
    auto index = build_index();
    Rng rng(4);
    CHECK_THROWS_AS(index.top_negatives({"piano"}, 0, 5, rng), ConfigError);
}

TEST_CASE("negative sampling is deterministic in the rng seed") {
    auto index = build_index();
    Rng a(7), b(7);
    auto na = index.top_negatives({"guitar"}, 2, 4, a);
    auto nb = index.top_negatives({"guitar"}, 2, 4, b);
    CHECK(na == nb);
}
