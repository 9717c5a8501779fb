#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gensar/error.hpp"

namespace gensar {

// 1-based rank of the ground truth in a ranked candidate list; 0 if absent.
inline std::size_t rank_of(const std::vector<std::uint64_t>& ranked,
                           std::uint64_t ground_truth) {
    for (std::size_t i = 0; i < ranked.size(); ++i)
        if (ranked[i] == ground_truth) return i + 1;
    return 0;
}

inline double hr_at_k(const std::vector<std::uint64_t>& ranked,
                      std::uint64_t ground_truth, std::size_t k) {
    if (k == 0) throw ConfigError("hr_at_k: k must be positive");
    std::size_t r = rank_of(ranked, ground_truth);
    return r != 0 && r <= k ? 1.0 : 0.0;
}

// Single relevant item, so the ideal DCG is 1 and NDCG@k reduces to
// 1/log2(rank+1) when the ground truth lands within the top k.
inline double ndcg_at_k(const std::vector<std::uint64_t>& ranked,
                        std::uint64_t ground_truth, std::size_t k) {
    if (k == 0) throw ConfigError("ndcg_at_k: k must be positive");
    std::size_t r = rank_of(ranked, ground_truth);
    if (r == 0 || r > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(r) + 1.0);
}

}  // namespace gensar
