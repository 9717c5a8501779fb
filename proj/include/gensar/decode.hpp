#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "gensar/error.hpp"
#include "gensar/identifier.hpp"
#include "gensar/seqmodel.hpp"

namespace gensar {

struct BeamState {
    std::vector<int> tokens;  // decoded so far (behavior token included)
    double log_prob = 0;
    int node = 0;  // trie cursor over the identifier part
};

struct DecodedItem {
    std::uint64_t item = 0;
    double score = 0;
    std::vector<int> tokens;
};

// Trie-constrained beam search. The behavior token (if >= 0) is forced as
// the first decoded token and its log-probability is part of the score;
// every expansion is restricted to tokens extending a valid identifier
// prefix, so each returned sequence maps to at least one catalog item.
// Identifiers that collide yield all their items (ordered by id) with the
// shared sequence score. Ties between sequences break lexicographically on
// token ids.
template <typename T>
std::vector<DecodedItem> constrained_beam_search(const SeqModel<T>& model,
                                                 const std::vector<int>& instruction,
                                                 int behavior_token,
                                                 const IdentifierTrie& trie,
                                                 std::size_t beam_width,
                                                 std::size_t top_k) {
    if (beam_width == 0) throw ConfigError("beam search: width must be positive");
    if (trie.allowed_next(std::vector<int>{}).empty())
        throw ConfigError("beam search: empty trie");
    auto enc = model.encode_source(instruction);

    BeamState root;
    if (behavior_token >= 0) {
        auto lp = model.next_token_log_probs(enc, {});
        root.tokens.push_back(behavior_token);
        root.log_prob = static_cast<double>(lp[static_cast<std::size_t>(behavior_token)]);
    }
    std::vector<BeamState> beams{root};
    std::vector<BeamState> done;

    while (!beams.empty()) {
        std::vector<BeamState> next;
        for (const auto& b : beams) {
            auto allowed = trie.allowed_next(b.node);
            if (allowed.empty()) {
                done.push_back(b);
                continue;
            }
            auto lp = model.next_token_log_probs(enc, b.tokens);
            for (int tok : allowed) {
                BeamState nb = b;
                nb.tokens.push_back(tok);
                nb.log_prob += static_cast<double>(lp[static_cast<std::size_t>(tok)]);
                nb.node = trie.child(b.node, tok);
                next.push_back(std::move(nb));
            }
        }
        std::sort(next.begin(), next.end(), [](const BeamState& a, const BeamState& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            return a.tokens < b.tokens;
        });
        if (next.size() > beam_width) next.resize(beam_width);
        beams = std::move(next);
    }

    std::sort(done.begin(), done.end(), [](const BeamState& a, const BeamState& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return a.tokens < b.tokens;
    });
    std::vector<DecodedItem> out;
    for (const auto& b : done) {
        std::vector<int> id_tokens(b.tokens.begin() + (behavior_token >= 0 ? 1 : 0),
                                   b.tokens.end());
        const auto* items = trie.terminal_items(id_tokens);
        if (!items) continue;  // unreachable for well-formed tries
        std::vector<std::uint64_t> sorted_items(*items);
        std::sort(sorted_items.begin(), sorted_items.end());
        for (std::uint64_t it : sorted_items) {
            if (out.size() == top_k) return out;
            out.push_back({it, b.log_prob, b.tokens});
        }
    }
    return out;
}

// Teacher-forced scoring of a fixed candidate list: each candidate's score
// is the sequence log-probability of (behavior token + identifier tokens).
// Returns candidates in descending score order, ties broken by item id.
template <typename T>
std::vector<std::pair<std::uint64_t, double>> score_candidates(
    const SeqModel<T>& model, const std::vector<int>& instruction,
    int behavior_token,
    const std::vector<std::pair<std::uint64_t, std::vector<int>>>& candidates) {
    auto enc = model.encode_source(instruction);
    std::vector<std::pair<std::uint64_t, double>> scored;
    scored.reserve(candidates.size());
    for (const auto& [item, id_tokens] : candidates) {
        if (id_tokens.empty())
            throw ConfigError("score_candidates: item " + std::to_string(item) +
                              " lacks an identifier");
        std::vector<int> seq;
        if (behavior_token >= 0) seq.push_back(behavior_token);
        seq.insert(seq.end(), id_tokens.begin(), id_tokens.end());
        scored.emplace_back(item, model.sequence_log_prob(enc, seq));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return scored;
}

}  // namespace gensar
