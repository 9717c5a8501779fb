#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gensar/bm25.hpp"
#include "gensar/corpus.hpp"
#include "gensar/decode.hpp"
#include "gensar/metrics.hpp"
#include "gensar/seqmodel.hpp"

namespace gensar {

// One evaluation row: the ground truth plus 99 negatives. `event_index`
// points at the target event in the user's history so the instruction can be
// re-rendered from the same split.
struct CandidateList {
    std::uint64_t user = 0;
    std::string task;  // "rec" | "search"
    std::size_t event_index = 0;
    std::uint64_t ground_truth = 0;
    std::vector<std::uint64_t> negatives;
};

enum class EvalSplit { Valid, Test };

// Builds 100-item candidate lists for every eligible user and task.
// Recommendation negatives are sampled uniformly from items absent from the
// user's history; search negatives come from BM25 over item descriptions
// (or uniform sampling when `search_negatives` == "random"). Empty queries
// fall back to random negatives and are logged.
std::vector<CandidateList> build_candidate_lists(
    const std::vector<UserHistory>& histories, const SplitResult& splits,
    const std::vector<CatalogItem>& catalog, const std::vector<QueryInfo>& queries,
    EvalSplit split, const std::string& search_negatives, std::uint64_t seed,
    std::vector<std::string>* log = nullptr);

void write_candidate_lists(const std::string& path,
                           const std::vector<CandidateList>& lists);
std::vector<CandidateList> read_candidate_lists(const std::string& path);

struct TaskMetrics {
    double hr1 = 0, hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0;
    double mean_rank = 0;
    std::size_t n_rows = 0, skipped_rows = 0;
};

struct EvalReport {
    TaskMetrics rec, search;
};

void write_eval_report(const std::string& path, const EvalReport& report);
EvalReport read_eval_report(const std::string& path);

// Scores every candidate list with teacher-forced sequence log-probabilities
// and aggregates HR@k / NDCG@k. Rows whose ground truth is missing from the
// candidate set are skipped and counted. Rows are independent and scored in
// parallel over the frozen model.
template <typename T>
EvalReport evaluate_model(const SeqModel<T>& model,
                          const std::vector<UserHistory>& histories,
                          const std::vector<CandidateList>& lists,
                          const std::map<std::uint64_t, ItemIdentifier>& ids,
                          const std::map<std::uint64_t, std::vector<int>>& query_words,
                          const TokenVocabulary& vocab, bool behavior_token,
                          std::size_t n_max = 20) {
    std::map<std::uint64_t, const UserHistory*> by_user;
    for (const auto& h : histories) by_user[h.user] = &h;

    struct Row {
        bool search = false;
        bool skipped = false;
        std::size_t rank = 0;
    };
    std::vector<Row> rows(lists.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::int64_t li = 0; li < static_cast<std::int64_t>(lists.size()); ++li) {
        const auto& cl = lists[static_cast<std::size_t>(li)];
        Row& row = rows[static_cast<std::size_t>(li)];
        row.search = cl.task == "search";
        auto hit = by_user.find(cl.user);
        if (hit == by_user.end())
            throw ConfigError("candidate list references unknown user " +
                              std::to_string(cl.user));
        std::vector<int> instruction =
            render_history(*hit->second, cl.event_index, ids, query_words, vocab,
                           behavior_token, n_max);
        Behavior b = row.search ? Behavior::SearchItem : Behavior::RecItem;
        int forced = behavior_token ? vocab.behavior_id(b) : -1;
        std::vector<std::pair<std::uint64_t, std::vector<int>>> candidates;
        candidates.reserve(cl.negatives.size() + 1);
        bool truth_present = false;
        auto add = [&](std::uint64_t item) {
            auto iit = ids.find(item);
            if (iit == ids.end())
                throw ConfigError("candidate item without identifier: " +
                                  std::to_string(item));
            candidates.emplace_back(item, row.search ? iit->second.semantic_tokens
                                                     : iit->second.collab_tokens);
            truth_present |= item == cl.ground_truth;
        };
        add(cl.ground_truth);
        for (std::uint64_t n : cl.negatives) add(n);
        if (!truth_present) {
            row.skipped = true;
            continue;
        }
        auto ranked = score_candidates(model, instruction, forced, candidates);
        std::vector<std::uint64_t> order;
        order.reserve(ranked.size());
        for (const auto& [item, _] : ranked) order.push_back(item);
        row.rank = rank_of(order, cl.ground_truth);
        if (row.rank == 0) row.skipped = true;
    }

    EvalReport report;
    for (const auto& row : rows) {
        TaskMetrics& m = row.search ? report.search : report.rec;
        if (row.skipped) {
            ++m.skipped_rows;
            continue;
        }
        ++m.n_rows;
        double r = static_cast<double>(row.rank);
        m.mean_rank += r;
        m.hr1 += row.rank <= 1 ? 1.0 : 0.0;
        m.hr5 += row.rank <= 5 ? 1.0 : 0.0;
        m.hr10 += row.rank <= 10 ? 1.0 : 0.0;
        m.ndcg5 += row.rank <= 5 ? 1.0 / std::log2(r + 1.0) : 0.0;
        m.ndcg10 += row.rank <= 10 ? 1.0 / std::log2(r + 1.0) : 0.0;
    }
    for (TaskMetrics* m : {&report.rec, &report.search}) {
        if (m->n_rows == 0) continue;
        double n = static_cast<double>(m->n_rows);
        m->hr1 /= n;
        m->hr5 /= n;
        m->hr10 /= n;
        m->ndcg5 /= n;
        m->ndcg10 /= n;
        m->mean_rank /= n;
    }
    return report;
}

}  // namespace gensar
