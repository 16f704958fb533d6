#include "ultr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace ultr {

double dcg_at_k(std::span<const int> ranked_grades, std::size_t k)
{
    double dcg = 0.0;
    std::size_t n = std::min(k, ranked_grades.size());
    for (std::size_t i = 0; i < n; ++i) {
        dcg += (std::exp2(ranked_grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg;
}

double ndcg_at_k(std::span<const int> ranked_grades, std::span<const int> ideal_grades, std::size_t k)
{
    std::vector<int> ideal(ideal_grades.begin(), ideal_grades.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = dcg_at_k(ideal, k);
    if (idcg <= 0.0) {
        return 0.0;
    }
    return dcg_at_k(ranked_grades, k) / idcg;
}

std::vector<int> grades_in_score_order(std::span<const double> scores,
                                       std::span<const std::string> doc_ids,
                                       std::span<const int> grades)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return doc_ids[a] < doc_ids[b];
    });
    std::vector<int> out;
    out.reserve(order.size());
    for (auto i: order) {
        out.push_back(grades[i]);
    }
    return out;
}

RunMetrics evaluate_run(const Rankings& run, const Qrels& qrels, std::size_t k)
{
    RunMetrics out;
    for (const auto& [qid, unsorted]: run) {
        auto docs = unsorted;
        sort_scored(docs);
        std::vector<int> ranked;
        std::vector<int> ideal;
        auto judged = qrels.find(qid);
        for (const auto& d: docs) {
            int g = 0;
            if (judged != qrels.end()) {
                auto it = judged->second.find(d.doc_id);
                g = it == judged->second.end() ? 0 : it->second;
            }
            ranked.push_back(g);
        }
        if (judged != qrels.end()) {
            for (const auto& [doc, g]: judged->second) {
                ideal.push_back(g);
            }
        }
        QueryMetrics m{qid, ndcg_at_k(ranked, ideal, k), dcg_at_k(ranked, k)};
        out.per_query.push_back(m);
    }
    if (!out.per_query.empty()) {
        for (const auto& m: out.per_query) {
            out.mean_ndcg += m.ndcg;
            out.mean_dcg += m.dcg;
        }
        out.mean_ndcg /= static_cast<double>(out.per_query.size());
        out.mean_dcg /= static_cast<double>(out.per_query.size());
    }
    return out;
}

}  // namespace ultr
