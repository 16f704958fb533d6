#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ultr/corpus_io.hpp"

namespace ultr {

/// Parameters of the synthetic corpus and of the position-based click model.
struct SimSpec {
    int n_queries = 100;
    int n_docs = 2000;  // split into per-query candidate pools; needs >= 10 per query
    int vocab_size = 5000;
    int max_grade = 4;
    double eta = 1.0;          // examination(k) = (1/k)^eta
    double click_noise = 0.1;  // perceived relevance floor
    int list_len = static_cast<int>(kListLength);
    std::uint64_t seed = 0;

    // Shape of the generated data.
    std::vector<double> grade_prior;  // empty: proportional to (max_grade + 1 - g)
    int terms_per_query = 3;
    double production_noise = 1.0;  // stddev of the logging ranker's noise, in grade units
    double length_bias = 0.0;       // logging-ranker weight on a document's (visible) length factor
    int false_negative_min = 0;     // stress mode: >= m unclicked items with grade >= 2 per list
    double text_noise = 0.0;        // stddev of the gap between true and textual relevance, in grades
    double spam_rate = 0.0;         // share of grade-0 documents stuffed with the query terms
    double spam_visibility = 1.0;   // grade the logging ranker sees for spam, as a share of max_grade
    int topic_vocab = 0;            // > 0: query terms come from this many words, shared across queries

    /// Throws DataError on an invalid spec.
    void validate() const;
    std::vector<double> prior() const;

    static SimSpec from_key_values(const std::map<std::string, std::string>& kv);
    std::map<std::string, std::string> to_key_values() const;
};

/// Graded relevance per (qid, doc_id).
struct GroundTruth {
    Qrels grades;
    int max_grade = 4;

    /// Throws DataError when the pair is not judged.
    int grade(const std::string& qid, const std::string& doc_id) const;
};

/// Initial ranking of one query, as produced by the noisy logging ranker.
struct RankedList {
    std::string qid;
    std::array<std::string, kListLength> docs;
};

struct SimCorpus {
    std::vector<Query> queries;
    std::vector<Document> docs;
    GroundTruth truth;              // every generated (query, pool doc) pair
    std::vector<RankedList> lists;  // one per query, in query order
};

SimCorpus generate_corpus(const SimSpec& spec);

double examination_probability(int position, double eta);
double perceived_relevance(int grade, int max_grade, double click_noise);

/// Position-based model: click ~ Bernoulli(examination(k) * perceived_relevance(grade)).
std::vector<ClickLog> simulate_clicks(const std::vector<RankedList>& lists, const GroundTruth& truth,
                                      double eta, double click_noise, std::uint64_t seed);

/// Removes clicks on relevant (grade >= 2) items, chosen uniformly at random, until each list
/// has at least `min_unclicked` relevant unclicked items or no relevant click is left.
void apply_false_negative_stress(std::vector<ClickLog>& logs, const GroundTruth& truth,
                                 int min_unclicked, std::uint64_t seed);

/// Judgments restricted to the documents shown in `lists` (the annotated SERPs).
Qrels serp_judgments(const std::vector<RankedList>& lists, const GroundTruth& truth);

}  // namespace ultr
