#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "gensar/error.hpp"

namespace gensar {

enum class Behavior { RecItem, SearchQuery, SearchItem };

enum class CodeFamily { Shared, Semantic, Collab };  // M / S / R token families

const char* behavior_token_string(Behavior b);

// Token id space: pad, bos, eos, unk, the three behavior tokens, then the
// code-token families <M{lvl}_{k}>, <S{lvl}_{k}>, <R{lvl}_{k}> (lvl is
// 1-based in the token string), then corpus words. The id mapping is a
// bijection fixed at construction.
class TokenVocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;

    TokenVocabulary() = default;
    TokenVocabulary(std::size_t L_m, std::size_t L_n, std::size_t K,
                    const std::vector<std::string>& words);

    std::size_t size() const { return tokens_.size(); }
    std::size_t shared_levels() const { return L_m_; }
    std::size_t specific_levels() const { return L_n_; }
    std::size_t codes_per_level() const { return K_; }

    int behavior_id(Behavior b) const;
    bool is_behavior(int id) const { return id >= 4 && id <= 6; }

    int code_id(CodeFamily f, std::size_t level, std::size_t k) const;
    bool is_code(int id) const;
    bool is_word(int id) const;

    int word_id(const std::string& w) const;  // unk_id when out of vocabulary
    const std::string& token(int id) const;
    int id_of(const std::string& tok) const;  // unk_id when unknown

    // Whitespace tokenization into the closed word vocabulary.
    std::vector<int> tokenize_query(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    void save_jsonl(const std::string& path) const;
    static TokenVocabulary load_jsonl(const std::string& path);

private:
    std::size_t L_m_ = 0, L_n_ = 0, K_ = 0;
    int code_base_ = 7;
    int word_base_ = 7;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Token-level identifiers of one item, both the same length L_m + L_n and
// sharing the first L_m tokens.
struct ItemIdentifier {
    std::uint64_t item = 0;
    std::vector<int> semantic_tokens;  // I_{m+s}
    std::vector<int> collab_tokens;    // I_{m+c}
};

ItemIdentifier make_item_identifier(const TokenVocabulary& vocab, std::uint64_t item,
                                    const std::vector<std::size_t>& shared_codes,
                                    const std::vector<std::size_t>& semantic_codes,
                                    const std::vector<std::size_t>& collab_codes);

// Behavior-aware rendering of one interaction: recommendation uses the
// collaborative identifier, search-click the semantic one, queries their
// word tokens. The behavior token leads.
std::vector<int> behavior_identifier(const TokenVocabulary& vocab, Behavior b,
                                     const ItemIdentifier& item);
std::vector<int> behavior_identifier(const TokenVocabulary& vocab,
                                     const std::vector<int>& query_word_ids);

// 1 - (#unique sequences / #sequences); input carries one entry per item.
double collision_rate(const std::vector<std::vector<int>>& identifiers);

// Prefix tree over identifier token sequences; drives constrained decoding.
// Immutable after construction, safe for concurrent reads.
class IdentifierTrie {
public:
    IdentifierTrie() { nodes_.emplace_back(); }

    void insert(const std::vector<int>& seq, std::uint64_t item);

    static constexpr int no_node = -1;
    int root() const { return 0; }
    int child(int node, int token) const;

    // Children of the node reached by `prefix`; empty when unreachable.
    std::vector<int> allowed_next(const std::vector<int>& prefix) const;
    std::vector<int> allowed_next(int node) const;

    bool is_terminal(int node) const { return !nodes_[node].items.empty(); }
    const std::vector<std::uint64_t>& items_at(int node) const {
        return nodes_[node].items;
    }
    const std::vector<std::uint64_t>* terminal_items(const std::vector<int>& seq) const;

    std::size_t size() const { return nodes_.size(); }

    // Every root-to-terminal path with its item set, for test oracles.
    std::vector<std::pair<std::vector<int>, std::vector<std::uint64_t>>> all_paths() const;

private:
    struct Node {
        std::map<int, int> children;  // ordered: deterministic iteration
        std::vector<std::uint64_t> items;
    };
    int walk(const std::vector<int>& prefix) const;
    std::vector<Node> nodes_;
};

}  // namespace gensar
