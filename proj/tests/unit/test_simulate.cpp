#include <doctest.h>

#include <cmath>
#include <set>

#include "ultr/simulate.hpp"

using namespace ultr;

namespace {

SimSpec small_spec()
{
    SimSpec s;
    s.n_queries = 30;
    s.n_docs = 600;
    s.vocab_size = 800;
    s.seed = 4;
    return s;
}

}  // namespace

TEST_CASE("click model primitives")
{
    CHECK(examination_probability(1, 1.0) == 1.0);
    CHECK(examination_probability(2, 1.0) == doctest::Approx(0.5));
    CHECK(examination_probability(7, 0.0) == 1.0);
    CHECK(examination_probability(4, 2.0) == doctest::Approx(1.0 / 16.0));
    CHECK(perceived_relevance(0, 4, 0.0) == 0.0);
    CHECK(perceived_relevance(4, 4, 0.0) == doctest::Approx(1.0));
    CHECK(perceived_relevance(0, 4, 0.1) == doctest::Approx(0.1));
}

TEST_CASE("corpus generation is deterministic and well-formed")
{
    auto spec = small_spec();
    auto a = generate_corpus(spec);
    auto b = generate_corpus(spec);
    CHECK(a.queries == b.queries);
    CHECK(a.docs == b.docs);
    CHECK(a.truth.grades == b.truth.grades);
    REQUIRE(a.lists.size() == 30);
    for (std::size_t i = 0; i < a.lists.size(); ++i) {
        CHECK(a.lists[i].docs == b.lists[i].docs);
        std::set<std::string> uniq(a.lists[i].docs.begin(), a.lists[i].docs.end());
        CHECK(uniq.size() == kListLength);
        for (const auto& d: a.lists[i].docs) {
            CHECK(a.truth.grades.at(a.lists[i].qid).count(d) == 1);
        }
    }
    CHECK(a.docs.size() == 600);

    spec.seed = 5;
    auto c = generate_corpus(spec);
    CHECK(c.docs != a.docs);

    SimSpec three = small_spec();
    three.n_queries = 3;
    three.n_docs = 60;
    auto t = generate_corpus(three);
    CHECK(t.lists.size() == 3);
    CHECK(simulate_clicks(t.lists, t.truth, 1.0, 0.1, 1).size() == 3);
}

TEST_CASE("grade histogram follows the prior")
{
    SimSpec spec = small_spec();
    spec.n_queries = 100;
    spec.n_docs = 20000;
    spec.grade_prior = {0.4, 0.3, 0.15, 0.1, 0.05};
    auto c = generate_corpus(spec);
    std::vector<double> counts(5, 0.0);
    double n = 0;
    for (const auto& [q, docs]: c.truth.grades) {
        for (const auto& [d, g]: docs) {
            counts[static_cast<std::size_t>(g)] += 1;
            n += 1;
        }
    }
    for (std::size_t g = 0; g < 5; ++g) {
        double p = spec.grade_prior[g];
        double sigma = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(counts[g] / n - p) < 4 * sigma);
    }
}

TEST_CASE("click-through rates follow the position-based model")
{
    const std::size_t n_lists = 20000;
    std::vector<RankedList> lists;
    GroundTruth truth;
    for (std::size_t i = 0; i < n_lists; ++i) {
        RankedList l{"q" + std::to_string(i), {}};
        for (std::size_t k = 0; k < kListLength; ++k) {
            l.docs[k] = "d" + std::to_string(k);
            truth.grades[l.qid][l.docs[k]] = static_cast<int>(k % 5);
        }
        lists.push_back(l);
    }
    auto logs = simulate_clicks(lists, truth, 1.0, 0.1, 9);
    for (std::size_t k = 0; k < kListLength; ++k) {
        double clicks = 0;
        for (const auto& log: logs) {
            clicks += log.clicks[k];
        }
        double p = examination_probability(static_cast<int>(k + 1), 1.0) *
                   perceived_relevance(static_cast<int>(k % 5), 4, 0.1);
        double sigma = std::sqrt(p * (1 - p) / n_lists);
        CHECK(std::abs(clicks / n_lists - p) < 4 * sigma);
    }

    auto zero = simulate_clicks(lists, truth, 1.0, 0.0, 3);
    for (const auto& log: zero) {
        CHECK(log.clicks[0] == 0);
        CHECK(log.clicks[5] == 0);
    }
    CHECK(simulate_clicks(lists, truth, 1.0, 0.1, 9) == logs);
}

TEST_CASE("false-negative stress")
{
    GroundTruth truth;
    RankedList l{"q", {}};
    for (std::size_t k = 0; k < kListLength; ++k) {
        l.docs[k] = "d" + std::to_string(k);
        truth.grades["q"][l.docs[k]] = k < 5 ? 3 : 0;
    }
    ClickLog log;
    log.qid = "q";
    log.ranked_docs = l.docs;
    log.clicks = {1, 1, 1, 1, 0, 1, 0, 0, 0, 0};
    std::vector<ClickLog> logs{log};
    apply_false_negative_stress(logs, truth, 3, 1);
    int unclicked_relevant = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        unclicked_relevant += logs[0].clicks[k] == 0;
    }
    CHECK(unclicked_relevant == 3);
    CHECK(logs[0].clicks[5] == 1);  // irrelevant clicks untouched

    std::vector<ClickLog> none{log};
    apply_false_negative_stress(none, truth, 0, 1);
    CHECK(none[0] == log);

    std::vector<ClickLog> all{log};
    apply_false_negative_stress(all, truth, 9, 1);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(all[0].clicks[k] == 0);
    }
}

TEST_CASE("spec validation and key-values round trip")
{
    SimSpec s = small_spec();
    s.grade_prior = {0.5, 0.5, 0, 0, 0};
    auto back = SimSpec::from_key_values(s.to_key_values());
    CHECK(back.to_key_values() == s.to_key_values());
    SimSpec bad = small_spec();
    bad.n_docs = 10;
    CHECK_THROWS_AS(bad.validate(), DataError);
    CHECK_THROWS_AS(SimSpec::from_key_values({{"bogus", "1"}}), DataError);
    auto serp = serp_judgments(generate_corpus(small_spec()).lists, generate_corpus(small_spec()).truth);
    CHECK(serp.size() == 30);
    CHECK(serp.begin()->second.size() == kListLength);
}
