#include "gensar/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gensar/error.hpp"

namespace gensar {

std::vector<std::string> Bm25Index::tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

void Bm25Index::add_document(std::uint64_t doc_id, const std::string& text) {
    if (docs_.count(doc_id))
        throw ConfigError("bm25: duplicate document id " + std::to_string(doc_id));
    Doc d;
    for (const auto& t : tokenize(text)) {
        ++d.tf[t];
        ++d.length;
    }
    for (const auto& [term, _] : d.tf) ++df_[term];
    total_length_ += d.length;
    docs_.emplace(doc_id, std::move(d));
}

double Bm25Index::idf(const std::string& term) const {
    auto it = df_.find(term);
    double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    double n = static_cast<double>(docs_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::score(const std::vector<std::string>& query_terms,
                        std::uint64_t doc_id) const {
    auto dit = docs_.find(doc_id);
    if (dit == docs_.end())
        throw ConfigError("bm25: unknown document id " + std::to_string(doc_id));
    const Doc& d = dit->second;
    double avg_len =
        docs_.empty() ? 0.0
                      : static_cast<double>(total_length_) /
                            static_cast<double>(docs_.size());
    double s = 0;
    for (const auto& term : query_terms) {
        auto tit = d.tf.find(term);
        if (tit == d.tf.end()) continue;
        double tf = static_cast<double>(tit->second);
        double denom = tf + k1_ * (1.0 - b_ + b_ * static_cast<double>(d.length) / avg_len);
        s += idf(term) * tf * (k1_ + 1.0) / denom;
    }
    return s;
}

std::vector<std::uint64_t> Bm25Index::top_negatives(
    const std::vector<std::string>& query_terms, std::uint64_t ground_truth,
    std::size_t n, Rng& rng, std::size_t* padded) const {
    std::vector<std::pair<double, std::uint64_t>> scored;
    for (const auto& [id, _] : docs_) {
        if (id == ground_truth) continue;
        double s = score(query_terms, id);
        if (s > 0) scored.emplace_back(s, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::uint64_t> out;
    for (const auto& [s, id] : scored) {
        if (out.size() == n) break;
        out.push_back(id);
    }
    std::size_t pad = 0;
    if (out.size() < n) {
        std::vector<std::uint64_t> pool;
        for (const auto& [id, _] : docs_) {
            if (id == ground_truth) continue;
            if (std::find(out.begin(), out.end(), id) == out.end()) pool.push_back(id);
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        while (out.size() < n && !pool.empty()) {
            out.push_back(pool.back());
            pool.pop_back();
            ++pad;
        }
        if (out.size() < n)
            throw ConfigError("bm25: corpus too small for " + std::to_string(n) +
                              " negatives");
    }
    if (padded) *padded = pad;
    return out;
}

}  // namespace gensar
