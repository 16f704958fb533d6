#pragma once

#include <span>
#include <string>
#include <vector>

#include "ultr/corpus_io.hpp"

namespace ultr {

/// DCG with exponential gain 2^g - 1 and log2(i + 1) discount, over the first min(k, n) items.
double dcg_at_k(std::span<const int> ranked_grades, std::size_t k);

/// DCG of the ranking divided by the DCG of `ideal_grades` sorted descending. 0 when the
/// ideal DCG is 0.
double ndcg_at_k(std::span<const int> ranked_grades, std::span<const int> ideal_grades, std::size_t k);

/// Grades in the order induced by `scores` (descending, ties by doc id ascending).
std::vector<int> grades_in_score_order(std::span<const double> scores,
                                       std::span<const std::string> doc_ids,
                                       std::span<const int> grades);

struct QueryMetrics {
    std::string qid;
    double ndcg = 0.0;
    double dcg = 0.0;
};

struct RunMetrics {
    std::vector<QueryMetrics> per_query;
    double mean_ndcg = 0.0;
    double mean_dcg = 0.0;
};

/// Scores a run against graded judgments. Each query's documents are ranked by score
/// (ties by doc id) exactly as write_run_file orders them. Unjudged documents count as grade 0; the ideal
/// ranking uses every judged document of the query. Queries absent from the run are skipped.
RunMetrics evaluate_run(const Rankings& run, const Qrels& qrels, std::size_t k);

}  // namespace ultr
