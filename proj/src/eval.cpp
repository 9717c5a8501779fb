#include "gensar/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace gensar {

namespace {

std::vector<std::uint64_t> random_negatives(const std::vector<CatalogItem>& catalog,
                                            const std::set<std::uint64_t>& excluded,
                                            std::size_t n, Rng& rng) {
    std::vector<std::uint64_t> pool;
    pool.reserve(catalog.size());
    for (const auto& it : catalog)
        if (!excluded.count(it.id)) pool.push_back(it.id);
    if (pool.size() < n)
        throw ConfigError("catalog too small for " + std::to_string(n) + " negatives");
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n);
    return pool;
}

}  // namespace

std::vector<CandidateList> build_candidate_lists(
    const std::vector<UserHistory>& histories, const SplitResult& splits,
    const std::vector<CatalogItem>& catalog, const std::vector<QueryInfo>& queries,
    EvalSplit split, const std::string& search_negatives, std::uint64_t seed,
    std::vector<std::string>* log) {
    if (search_negatives != "random" && search_negatives != "bm25")
        throw ConfigError("negatives mode must be random or bm25, got " +
                          search_negatives);
    constexpr std::size_t n_neg = 99;
    Bm25Index index;
    if (search_negatives == "bm25")
        for (const auto& it : catalog) index.add_document(it.id, it.description);
    std::map<std::uint64_t, const QueryInfo*> query_by_id;
    for (const auto& q : queries) query_by_id[q.id] = &q;
    std::map<std::uint64_t, const UserHistory*> by_user;
    for (const auto& h : histories) by_user[h.user] = &h;

    std::vector<CandidateList> out;
    for (const auto& [user, us] : splits.users) {
        const UserHistory& h = *by_user.at(user);
        std::set<std::uint64_t> history_items;
        for (const auto& ev : h.events)
            if (ev.b != Behavior::SearchQuery) history_items.insert(ev.payload);

        auto rec_idx = split == EvalSplit::Test ? us.rec.test : us.rec.valid;
        if (rec_idx) {
            CandidateList cl;
            cl.user = user;
            cl.task = "rec";
            cl.event_index = *rec_idx;
            cl.ground_truth = h.events[*rec_idx].payload;
            Rng rng(derive_seed(seed, user * 4 + 0));
            cl.negatives = random_negatives(catalog, history_items, n_neg, rng);
            out.push_back(std::move(cl));
        }

        auto search_idx = split == EvalSplit::Test ? us.search.test : us.search.valid;
        if (search_idx) {
            CandidateList cl;
            cl.user = user;
            cl.task = "search";
            cl.event_index = *search_idx;
            cl.ground_truth = h.events[*search_idx].payload;
            Rng rng(derive_seed(seed, user * 4 + 1));
            if (search_negatives == "bm25") {
                const auto& qev = h.events[*search_idx - 1];
                if (qev.b != Behavior::SearchQuery)
                    throw ConfigError("search target without preceding query, user " +
                                      std::to_string(user));
                auto qit = query_by_id.find(qev.payload);
                if (qit == query_by_id.end())
                    throw ConfigError("unknown query id " + std::to_string(qev.payload));
                auto terms = Bm25Index::tokenize(qit->second->text);
                if (terms.empty()) {
                    if (log)
                        log->push_back("user " + std::to_string(user) +
                                       ": empty query, random negatives");
                    cl.negatives = random_negatives(
                        catalog, std::set<std::uint64_t>{cl.ground_truth}, n_neg, rng);
                } else {
                    std::size_t padded = 0;
                    cl.negatives =
                        index.top_negatives(terms, cl.ground_truth, n_neg, rng, &padded);
                    if (padded && log)
                        log->push_back("user " + std::to_string(user) + ": " +
                                       std::to_string(padded) + " random-padded negatives");
                }
            } else {
                cl.negatives = random_negatives(
                    catalog, std::set<std::uint64_t>{cl.ground_truth}, n_neg, rng);
            }
            out.push_back(std::move(cl));
        }
    }
    return out;
}

void write_candidate_lists(const std::string& path,
                           const std::vector<CandidateList>& lists) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write candidate lists: " + path);
    for (const auto& cl : lists) {
        nlohmann::json j{{"user", cl.user},
                         {"task", cl.task},
                         {"event_index", cl.event_index},
                         {"ground_truth", cl.ground_truth},
                         {"negatives", cl.negatives}};
        out << j.dump() << '\n';
    }
}

std::vector<CandidateList> read_candidate_lists(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read candidate lists: " + path);
    std::vector<CandidateList> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        CandidateList cl;
        cl.user = j.at("user");
        cl.task = j.at("task");
        cl.event_index = j.at("event_index");
        cl.ground_truth = j.at("ground_truth");
        cl.negatives = j.at("negatives").get<std::vector<std::uint64_t>>();
        out.push_back(std::move(cl));
    }
    return out;
}

namespace {

nlohmann::json metrics_json(const TaskMetrics& m) {
    return {{"HR@1", m.hr1},           {"HR@5", m.hr5},
            {"HR@10", m.hr10},         {"NDCG@5", m.ndcg5},
            {"NDCG@10", m.ndcg10},     {"mean_rank", m.mean_rank},
            {"n_rows", m.n_rows},      {"skipped_rows", m.skipped_rows}};
}

TaskMetrics metrics_from_json(const nlohmann::json& j) {
    TaskMetrics m;
    m.hr1 = j.at("HR@1");
    m.hr5 = j.at("HR@5");
    m.hr10 = j.at("HR@10");
    m.ndcg5 = j.at("NDCG@5");
    m.ndcg10 = j.at("NDCG@10");
    m.mean_rank = j.at("mean_rank");
    m.n_rows = j.at("n_rows");
    m.skipped_rows = j.at("skipped_rows");
    return m;
}

}  // namespace

void write_eval_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw MissingInputError("cannot write eval report: " + path);
    nlohmann::json j{{"rec", metrics_json(report.rec)},
                     {"search", metrics_json(report.search)}};
    out << j.dump(2) << '\n';
}

EvalReport read_eval_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot read eval report: " + path);
    nlohmann::json j;
    in >> j;
    EvalReport r;
    r.rec = metrics_from_json(j.at("rec"));
    r.search = metrics_from_json(j.at("search"));
    return r;
}

}  // namespace gensar
