#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gensar/identifier.hpp"
#include "gensar/rqvae.hpp"

namespace gensar {

// One event in a user history. Payload is an item id for <R_I>/<S_I> and a
// query id for <S_Q>; timestamps are monotone ordinals.
struct Interaction {
    Behavior b = Behavior::RecItem;
    std::uint64_t payload = 0;
    std::uint64_t t = 0;
};

struct UserHistory {
    std::uint64_t user = 0;
    std::vector<Interaction> events;
};

struct CatalogItem {
    std::uint64_t id = 0;
    std::string description;
    int cluster = 0;
    int subcluster = 0;
};

struct QueryInfo {
    std::uint64_t id = 0;
    std::string text;
    int cluster = 0;
};

struct SynthConfig {
    std::size_t n_users = 500;
    std::size_t n_items = 2000;
    std::size_t n_queries = 40;
    std::size_t n_clusters = 20;
    std::size_t n_subclusters = 5;
    std::size_t history_len = 14;  // interactions per user (search pair counts as 2)
    std::size_t d_s = 32;
    std::size_t d_c = 32;
    double search_prob = 0.35;
    double subcluster_affinity = 0.8;  // P(item drawn from preferred subcluster)
    // near-duplicate structure: fraction of items paired as relistings that
    // share a semantic embedding exactly, and as interaction clones that share
    // a collaborative embedding exactly (disjoint sets of items)
    double sem_twin_frac = 0.1;
    double collab_twin_frac = 0.1;
    std::uint64_t seed = 1;
};

struct SynthCorpus {
    SynthConfig cfg;
    std::vector<CatalogItem> catalog;
    std::vector<QueryInfo> queries;
    std::vector<UserHistory> histories;
    std::vector<ItemEmbeddingPair<float>> embeddings;
    // planted ground truth, kept for statistical tests
    std::vector<std::vector<double>> user_cluster_pref;   // n_users x n_clusters
    std::vector<std::vector<int>> user_pref_subcluster;   // n_users x n_clusters
};

// Deterministic generator with planted learnable structure: items carry
// cluster/subcluster labels, semantic embeddings are centroid + offset +
// noise, collaborative embeddings are aggregated from the vectors of users
// who interacted with the item, each query names one cluster and is always
// followed by an item of that cluster, and recommendation clicks follow the
// user's cluster-preference mixture.
SynthCorpus generate_synthetic(const SynthConfig& cfg);

// Leave-one-out targets of one task for one user. Indices refer to
// positions in the user's event list; for search they point at the <S_I>
// event (its query sits at index-1).
struct TaskTargets {
    std::vector<std::size_t> train;
    std::optional<std::size_t> valid;
    std::optional<std::size_t> test;
};

struct UserSplit {
    TaskTargets rec;
    TaskTargets search;
    std::vector<std::size_t> query_train;  // <S_Q> indices usable as NSQP targets
};

struct SplitResult {
    std::map<std::uint64_t, UserSplit> users;
    std::vector<std::string> exclusions;  // one log line per (user, task) exclusion
};

SplitResult split(const std::vector<UserHistory>& histories);

struct InstructionExample {
    std::string task;  // NRIP | NSQP | NSIP | Desc2ID | ID2Desc
    std::vector<int> instruction;
    std::vector<int> response;
};

struct TaskSet {
    bool nrip = true;
    bool nsqp = true;
    bool nsip = true;
    bool desc2id = true;
    bool id2desc = true;
    bool behavior_token = true;  // ablation flag: drop behavior tokens everywhere
};

TaskSet parse_task_set(const std::string& csv);  // "nrip,nsqp,..."

// Behavior-aware rendering of the events strictly before `end_index`,
// truncated to the most recent n_max interactions.
std::vector<int> render_history(const UserHistory& history, std::size_t end_index,
                                const std::map<std::uint64_t, ItemIdentifier>& ids,
                                const std::map<std::uint64_t, std::vector<int>>& query_words,
                                const TokenVocabulary& vocab, bool behavior_token,
                                std::size_t n_max);

std::vector<InstructionExample> build_instructions(
    const std::vector<UserHistory>& histories, const SplitResult& splits,
    const std::map<std::uint64_t, ItemIdentifier>& ids,
    const std::vector<CatalogItem>& catalog, const std::vector<QueryInfo>& queries,
    const TokenVocabulary& vocab, const TaskSet& tasks, std::size_t n_max = 20);

// Closed word vocabulary of the corpus: all query and description words.
std::vector<std::string> collect_words(const std::vector<CatalogItem>& catalog,
                                       const std::vector<QueryInfo>& queries);
std::vector<std::string> collect_words(const SynthCorpus& corpus);

// Query id -> word-token ids under the given vocabulary.
std::map<std::uint64_t, std::vector<int>> query_word_map(
    const std::vector<QueryInfo>& queries, const TokenVocabulary& vocab);

// --- file formats ---------------------------------------------------------

// Embeddings: text header "GSEB v1 <n_items> <d_s> <d_c>\n" then per-item
// little-endian binary records (item id u64, f32 x d_s, f32 x d_c).
void write_embeddings(const std::string& path,
                      const std::vector<ItemEmbeddingPair<float>>& items,
                      std::size_t d_s, std::size_t d_c);
std::vector<ItemEmbeddingPair<float>> read_embeddings(const std::string& path);

void write_histories(const std::string& path, const std::vector<UserHistory>& histories);
std::vector<UserHistory> read_histories(const std::string& path);

void write_catalog(const std::string& path, const std::vector<CatalogItem>& catalog);
std::vector<CatalogItem> read_catalog(const std::string& path);

void write_queries(const std::string& path, const std::vector<QueryInfo>& queries);
std::vector<QueryInfo> read_queries(const std::string& path);

void write_identifiers(const std::string& path,
                       const std::vector<ItemIdentifierCodes<float>>& ids);
std::vector<ItemIdentifierCodes<float>> read_identifiers(const std::string& path);

void write_instructions(const std::string& path,
                        const std::vector<InstructionExample>& examples);
std::vector<InstructionExample> read_instructions(const std::string& path);

}  // namespace gensar
