#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gensar/rng.hpp"

namespace gensar {

// Okapi BM25 over whitespace-tokenized item descriptions.
// IDF = ln((N - df + 0.5) / (df + 0.5) + 1).
class Bm25Index {
public:
    Bm25Index(double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {}

    void add_document(std::uint64_t doc_id, const std::string& text);
    std::size_t size() const { return docs_.size(); }

    double score(const std::vector<std::string>& query_terms,
                 std::uint64_t doc_id) const;

    // Top-n scoring documents for the query excluding `ground_truth`; padded
    // with random non-excluded documents when fewer than n have a positive
    // score. `padded` (if given) reports how many slots fell back to random.
    std::vector<std::uint64_t> top_negatives(
        const std::vector<std::string>& query_terms, std::uint64_t ground_truth,
        std::size_t n, Rng& rng, std::size_t* padded = nullptr) const;

    static std::vector<std::string> tokenize(const std::string& text);

private:
    struct Doc {
        std::map<std::string, std::size_t> tf;
        std::size_t length = 0;
    };
    double idf(const std::string& term) const;

    double k1_, b_;
    std::map<std::uint64_t, Doc> docs_;
    std::map<std::string, std::size_t> df_;
    std::size_t total_length_ = 0;
};

}  // namespace gensar
