#include <doctest.h>

#include <cmath>
#include <random>

#include "../common/oracles.hpp"
#include "ultr/metrics.hpp"

using namespace ultr;

TEST_CASE("dcg examples")
{
    std::vector<int> zeros{0, 0, 0};
    CHECK(dcg_at_k(zeros, 10) == 0.0);
    std::vector<int> g{3, 2};
    CHECK(dcg_at_k(g, 2) == doctest::Approx(7.0 + 3.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(dcg_at_k(g, 2) == doctest::Approx(8.8928).epsilon(1e-4));
    CHECK(dcg_at_k(g, 50) == dcg_at_k(g, 2));
    CHECK(dcg_at_k(g, 1) == doctest::Approx(7.0));
}

TEST_CASE("ndcg examples")
{
    std::vector<int> ideal{3, 2, 1, 0};
    CHECK(ndcg_at_k(ideal, ideal, 10) == doctest::Approx(1.0));
    std::vector<int> zeros{0, 0};
    CHECK(ndcg_at_k(zeros, zeros, 10) == 0.0);
    std::vector<int> rev{0, 1, 2, 3};
    double v = ndcg_at_k(rev, ideal, 10);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
}

TEST_CASE("ideal dcg equals the brute-force permutation maximum")
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> len(1, 6);
    std::uniform_int_distribution<int> grade(0, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> g(static_cast<std::size_t>(len(rng)));
        for (auto& x: g) {
            x = grade(rng);
        }
        std::size_t k = 1 + static_cast<std::size_t>(trial % 7);
        double brute = oracle::brute_force_ideal_dcg(g, k);
        double n = ndcg_at_k(g, g, k);
        double ranked = oracle::dcg(g, k);
        if (brute == 0.0) {
            CHECK(n == 0.0);
        } else {
            CHECK(n == doctest::Approx(ranked / brute).epsilon(1e-12));
        }
        CHECK(n >= 0.0);
        CHECK(n <= 1.0 + 1e-12);
    }
}

TEST_CASE("grades_in_score_order breaks ties by doc id")
{
    std::vector<double> s{1.0, 2.0, 1.0};
    std::vector<std::string> ids{"b", "c", "a"};
    std::vector<int> g{1, 2, 3};
    CHECK(grades_in_score_order(s, ids, g) == std::vector<int>{2, 3, 1});
}

TEST_CASE("evaluate_run")
{
    Qrels q{{"q1", {{"a", 2}, {"b", 0}, {"c", 1}}}, {"q2", {{"x", 0}}}};
    Rankings run{{"q1", {{"a", 3.0}, {"c", 2.0}, {"b", 1.0}}}, {"q2", {{"x", 1.0}}}};
    auto m = evaluate_run(run, q, 10);
    REQUIRE(m.per_query.size() == 2);
    CHECK(m.per_query[0].ndcg == doctest::Approx(1.0));
    CHECK(m.per_query[1].ndcg == 0.0);
    CHECK(m.mean_ndcg == doctest::Approx(0.5));
    CHECK(m.per_query[0].dcg == doctest::Approx(3.0 + 1.0 / std::log2(3.0)));

    // unjudged docs count as 0; judged docs missing from the run still enter the ideal
    Rankings partial{{"q1", {{"zz", 5.0}, {"c", 1.0}}}};
    auto p = evaluate_run(partial, q, 10);
    double ideal = 3.0 + 1.0 / std::log2(3.0);
    CHECK(p.per_query[0].ndcg == doctest::Approx((1.0 / std::log2(3.0)) / ideal));
}
