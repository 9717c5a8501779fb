#include "gensar/identifier.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gensar {

const char* behavior_token_string(Behavior b) {
    switch (b) {
        case Behavior::RecItem: return "<R_I>";
        case Behavior::SearchQuery: return "<S_Q>";
        case Behavior::SearchItem: return "<S_I>";
    }
    throw ConfigError("unknown behavior");
}

static char family_letter(CodeFamily f) {
    switch (f) {
        case CodeFamily::Shared: return 'M';
        case CodeFamily::Semantic: return 'S';
        case CodeFamily::Collab: return 'R';
    }
    throw ConfigError("unknown code family");
}

TokenVocabulary::TokenVocabulary(std::size_t L_m, std::size_t L_n, std::size_t K,
                                 const std::vector<std::string>& words)
    : L_m_(L_m), L_n_(L_n), K_(K) {
    tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>", "<R_I>", "<S_Q>", "<S_I>"};
    code_base_ = static_cast<int>(tokens_.size());
    auto add_family = [this](CodeFamily f, std::size_t levels) {
        for (std::size_t lvl = 0; lvl < levels; ++lvl)
            for (std::size_t k = 0; k < K_; ++k) {
                std::ostringstream os;
                os << '<' << family_letter(f) << (lvl + 1) << '_' << k << '>';
                tokens_.push_back(os.str());
            }
    };
    add_family(CodeFamily::Shared, L_m_);
    add_family(CodeFamily::Semantic, L_n_);
    add_family(CodeFamily::Collab, L_n_);
    word_base_ = static_cast<int>(tokens_.size());
    for (const auto& w : words) tokens_.push_back(w);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, fresh] = index_.emplace(tokens_[i], static_cast<int>(i));
        if (!fresh) throw ConfigError("duplicate token in vocabulary: " + tokens_[i]);
    }
}

int TokenVocabulary::behavior_id(Behavior b) const {
    switch (b) {
        case Behavior::RecItem: return 4;
        case Behavior::SearchQuery: return 5;
        case Behavior::SearchItem: return 6;
    }
    throw ConfigError("unknown behavior");
}

int TokenVocabulary::code_id(CodeFamily f, std::size_t level, std::size_t k) const {
    std::size_t levels = f == CodeFamily::Shared ? L_m_ : L_n_;
    if (level >= levels || k >= K_)
        throw ConfigError("code token out of bounds: level " + std::to_string(level) +
                          " index " + std::to_string(k));
    std::size_t family_offset = 0;
    if (f == CodeFamily::Semantic) family_offset = L_m_ * K_;
    if (f == CodeFamily::Collab) family_offset = (L_m_ + L_n_) * K_;
    return code_base_ + static_cast<int>(family_offset + level * K_ + k);
}

bool TokenVocabulary::is_code(int id) const {
    return id >= code_base_ && id < word_base_;
}

bool TokenVocabulary::is_word(int id) const {
    return id >= word_base_ && id < static_cast<int>(tokens_.size());
}

int TokenVocabulary::word_id(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end() || !is_word(it->second)) return unk_id;
    return it->second;
}

const std::string& TokenVocabulary::token(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
        throw ConfigError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

int TokenVocabulary::id_of(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? unk_id : it->second;
}

std::vector<int> TokenVocabulary::tokenize_query(const std::string& text) const {
    std::vector<int> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(word_id(w));
    return out;
}

std::string TokenVocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

void TokenVocabulary::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write vocabulary: " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        int id = static_cast<int>(i);
        const char* family = "special";
        if (is_behavior(id)) family = "behavior";
        else if (is_code(id)) family = "code";
        else if (is_word(id)) family = "word";
        nlohmann::json j{{"token", tokens_[i]}, {"id", id}, {"family", family}};
        out << j.dump() << '\n';
    }
    nlohmann::json meta{{"token", "<meta>"},
                        {"id", -1},
                        {"family", "meta"},
                        {"L_m", L_m_},
                        {"L_n", L_n_},
                        {"K", K_}};
    out << meta.dump() << '\n';
}

TokenVocabulary TokenVocabulary::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read vocabulary: " + path);
    std::size_t L_m = 0, L_n = 0, K = 0;
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        std::string family = j.at("family");
        if (family == "meta") {
            L_m = j.at("L_m");
            L_n = j.at("L_n");
            K = j.at("K");
        } else if (family == "word") {
            words.push_back(j.at("token"));
        }
    }
    if (K == 0) throw ConfigError("vocabulary file lacks meta record: " + path);
    return TokenVocabulary(L_m, L_n, K, words);
}

ItemIdentifier make_item_identifier(const TokenVocabulary& vocab, std::uint64_t item,
                                    const std::vector<std::size_t>& shared_codes,
                                    const std::vector<std::size_t>& semantic_codes,
                                    const std::vector<std::size_t>& collab_codes) {
    if (shared_codes.size() != vocab.shared_levels() ||
        semantic_codes.size() != vocab.specific_levels() ||
        collab_codes.size() != vocab.specific_levels())
        throw DimensionError("identifier level count does not match vocabulary");
    ItemIdentifier id;
    id.item = item;
    for (std::size_t i = 0; i < shared_codes.size(); ++i) {
        int t = vocab.code_id(CodeFamily::Shared, i, shared_codes[i]);
        id.semantic_tokens.push_back(t);
        id.collab_tokens.push_back(t);
    }
    for (std::size_t i = 0; i < semantic_codes.size(); ++i)
        id.semantic_tokens.push_back(vocab.code_id(CodeFamily::Semantic, i, semantic_codes[i]));
    for (std::size_t i = 0; i < collab_codes.size(); ++i)
        id.collab_tokens.push_back(vocab.code_id(CodeFamily::Collab, i, collab_codes[i]));
    return id;
}

std::vector<int> behavior_identifier(const TokenVocabulary& vocab, Behavior b,
                                     const ItemIdentifier& item) {
    if (b == Behavior::SearchQuery)
        throw ConfigError("behavior_identifier: <S_Q> takes a word sequence, not an item");
    std::vector<int> out{vocab.behavior_id(b)};
    const auto& tokens =
        b == Behavior::RecItem ? item.collab_tokens : item.semantic_tokens;
    out.insert(out.end(), tokens.begin(), tokens.end());
    return out;
}

std::vector<int> behavior_identifier(const TokenVocabulary& vocab,
                                     const std::vector<int>& query_word_ids) {
    std::vector<int> out{vocab.behavior_id(Behavior::SearchQuery)};
    out.insert(out.end(), query_word_ids.begin(), query_word_ids.end());
    return out;
}

double collision_rate(const std::vector<std::vector<int>>& identifiers) {
    if (identifiers.empty()) throw ConfigError("collision_rate: empty input");
    std::set<std::vector<int>> unique(identifiers.begin(), identifiers.end());
    return 1.0 - static_cast<double>(unique.size()) /
                     static_cast<double>(identifiers.size());
}

void IdentifierTrie::insert(const std::vector<int>& seq, std::uint64_t item) {
    int node = 0;
    for (int tok : seq) {
        auto it = nodes_[node].children.find(tok);
        if (it == nodes_[node].children.end()) {
            nodes_.emplace_back();
            it = nodes_[node].children.emplace(tok, static_cast<int>(nodes_.size() - 1)).first;
        }
        node = it->second;
    }
    auto& items = nodes_[node].items;
    if (std::find(items.begin(), items.end(), item) == items.end())
        items.push_back(item);
}

int IdentifierTrie::child(int node, int token) const {
    auto it = nodes_[node].children.find(token);
    return it == nodes_[node].children.end() ? no_node : it->second;
}

int IdentifierTrie::walk(const std::vector<int>& prefix) const {
    int node = 0;
    for (int tok : prefix) {
        node = child(node, tok);
        if (node == no_node) return no_node;
    }
    return node;
}

std::vector<int> IdentifierTrie::allowed_next(int node) const {
    std::vector<int> out;
    if (node == no_node) return out;
    out.reserve(nodes_[node].children.size());
    for (const auto& [tok, _] : nodes_[node].children) out.push_back(tok);
    return out;
}

std::vector<int> IdentifierTrie::allowed_next(const std::vector<int>& prefix) const {
    return allowed_next(walk(prefix));
}

const std::vector<std::uint64_t>* IdentifierTrie::terminal_items(
    const std::vector<int>& seq) const {
    int node = walk(seq);
    if (node == no_node || nodes_[node].items.empty()) return nullptr;
    return &nodes_[node].items;
}

std::vector<std::pair<std::vector<int>, std::vector<std::uint64_t>>>
IdentifierTrie::all_paths() const {
    std::vector<std::pair<std::vector<int>, std::vector<std::uint64_t>>> out;
    std::vector<int> path;
    // iterative DFS in child order
    struct Frame {
        int node;
        std::map<int, int>::const_iterator it;
    };
    std::vector<Frame> stack{{0, nodes_[0].children.begin()}};
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.it == nodes_[f.node].children.begin() && !nodes_[f.node].items.empty())
            out.emplace_back(path, nodes_[f.node].items);
        if (f.it == nodes_[f.node].children.end()) {
            stack.pop_back();
            if (!path.empty()) path.pop_back();
            continue;
        }
        int tok = f.it->first;
        int next = f.it->second;
        ++f.it;
        path.push_back(tok);
        stack.push_back({next, nodes_[next].children.begin()});
    }
    return out;
}

}  // namespace gensar
