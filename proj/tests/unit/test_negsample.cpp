#include <doctest.h>

#include <cmath>
#include <set>

#include "../common/oracles.hpp"
#include "helpers.hpp"
#include "ultr/negsample.hpp"

using namespace ultr;

namespace {

ClickLog make_log(const std::string& qid, std::array<std::uint8_t, kListLength> clicks)
{
    ClickLog log;
    log.qid = qid;
    for (std::size_t k = 0; k < kListLength; ++k) {
        log.ranked_docs[k] = "s" + std::to_string(k);
    }
    log.clicks = clicks;
    return log;
}

std::vector<std::string> pool(std::size_t n)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back("p" + std::to_string(i));
    }
    for (std::size_t k = 0; k < kListLength; ++k) {
        out.push_back("s" + std::to_string(k));
    }
    return out;
}

std::vector<std::pair<std::string, double>> cands(std::initializer_list<double> scores)
{
    std::vector<std::pair<std::string, double>> out;
    int i = 0;
    for (double s: scores) {
        out.emplace_back("c" + std::to_string(i++), s);
    }
    return out;
}

}  // namespace

TEST_CASE("scheme parsing")
{
    CHECK(parse_neg_scheme("click-only") == NegScheme::click_only);
    CHECK(parse_neg_scheme("last_click") == NegScheme::last_click);
    CHECK(to_string(NegScheme::last_click) == "last-click");
    CHECK_THROWS_AS(parse_neg_scheme("first-click"), DataError);
    NegSpec bad;
    bad.n_hard = 201;
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad.n_hard = 0;
    bad.n_random = -1;
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("gaussian hard-negative sampling")
{
    auto c = cands({5, 4, 3, 2, 1});
    auto all = sample_hard_negatives(c, 5, 1);
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == 5);
    CHECK(sample_hard_negatives(c, 9, 1).size() == 5);
    auto two = sample_hard_negatives(c, 2, 1);
    CHECK(std::set<std::string>(two.begin(), two.end()) == std::set<std::string>{"c0", "c4"});
    CHECK(sample_hard_negatives(c, 0, 1).empty());

    std::mt19937_64 rng(3);
    std::vector<std::pair<std::string, double>> big;
    for (int i = 0; i < 200; ++i) {
        big.emplace_back("b" + std::to_string(i), std::normal_distribution<double>(10, 3)(rng));
    }
    auto a = sample_hard_negatives(big, 50, 77);
    CHECK(a == sample_hard_negatives(big, 50, 77));
    CHECK(a.size() == 50);
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 50);
    auto best = std::max_element(big.begin(), big.end(), [](auto& x, auto& y) { return x.second < y.second; });
    auto worst = std::min_element(big.begin(), big.end(), [](auto& x, auto& y) { return x.second < y.second; });
    CHECK(std::find(a.begin(), a.end(), best->first) != a.end());
    CHECK(std::find(a.begin(), a.end(), worst->first) != a.end());

    std::set<std::string> exclude{best->first};
    auto ex = sample_hard_negatives(big, 50, 77, exclude);
    CHECK(std::find(ex.begin(), ex.end(), best->first) == ex.end());
}

TEST_CASE("click-only reconstruction")
{
    auto log = make_log("q", {0, 1, 0, 0, 0, 0, 0, 0, 0, 0});
    NegSpec spec{NegScheme::click_only, 0, 0, 1};
    auto p = pool(100);
    auto l = reconstruct_list(log, spec, p, {});
    REQUIRE(l.entries.size() == 10);
    CHECK(l.entries[0].doc_id == "s1");
    CHECK(l.entries[0].label == 1);
    CHECK(l.entries[0].origin == NegOrigin::kept);
    for (std::size_t i = 1; i < 10; ++i) {
        CHECK(l.entries[i].origin == NegOrigin::random_neg);
        CHECK(l.entries[i].label == 0);
        CHECK(l.entries[i].doc_id[0] == 'p');  // never from the original list
    }
    CHECK(l.num_positive() == 1);

    spec.n_random = 5;
    spec.n_hard = 3;
    auto more = reconstruct_list(log, spec, p, {"h1", "h2", "h3", "h4"});
    CHECK(more.entries.size() == 18);
    CHECK(more.entries[15].doc_id == "h1");
    CHECK(more.entries[17].doc_id == "h3");
    CHECK(more.entries[17].origin == NegOrigin::hard_neg);

    auto none = reconstruct_list(make_log("q", {}), NegSpec{}, p, {});
    CHECK(none.num_positive() == 0);
    CHECK(none.entries.size() == 10);
}

TEST_CASE("last-click reconstruction")
{
    auto log = make_log("q", {1, 0, 1, 0, 0, 0, 0, 0, 0, 0});
    NegSpec spec{NegScheme::last_click, 0, 0, 1};
    auto p = pool(50);
    auto l = reconstruct_list(log, spec, p, {});
    REQUIRE(l.entries.size() == 10);
    CHECK(l.entries[0].doc_id == "s0");
    CHECK(l.entries[1].doc_id == "s1");
    CHECK(l.entries[1].label == 0);
    CHECK(l.entries[1].origin == NegOrigin::kept);
    CHECK(l.entries[2].label == 1);
    for (std::size_t i = 3; i < 10; ++i) {
        CHECK(l.entries[i].origin == NegOrigin::random_neg);
    }
}

TEST_CASE("hard-negative shortfall is filled with random negatives")
{
    auto log = make_log("q", {1, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    NegSpec spec{NegScheme::click_only, 6, 2, 1};
    auto p = pool(100);
    // duplicates and original-list ids do not count as hard negatives
    auto l = reconstruct_list(log, spec, p, {"h1", "s3", "h1", "h2"});
    CHECK(l.entries.size() == spec.list_length());
    std::set<std::string> ids;
    int hard = 0;
    for (const auto& e: l.entries) {
        ids.insert(e.doc_id);
        hard += e.origin == NegOrigin::hard_neg;
    }
    CHECK(ids.size() == l.entries.size());
    CHECK(hard == 2);
}

TEST_CASE("reconstructed lists are equal length without duplicates")
{
    std::mt19937_64 rng(6);
    auto p = pool(300);
    for (int t = 0; t < 200; ++t) {
        std::array<std::uint8_t, kListLength> clicks{};
        for (auto& c: clicks) {
            c = static_cast<std::uint8_t>(rng() % 4 == 0);
        }
        NegSpec spec{t % 2 ? NegScheme::click_only : NegScheme::last_click, static_cast<int>(rng() % 20),
                     static_cast<int>(rng() % 20), static_cast<std::uint64_t>(t)};
        std::vector<std::string> hard;
        for (int h = 0; h < static_cast<int>(rng() % 25); ++h) {
            hard.push_back("p" + std::to_string(rng() % 300));
        }
        auto l = reconstruct_list(make_log("q" + std::to_string(t), clicks), spec, p, hard);
        CHECK(l.entries.size() == spec.list_length());
        std::set<std::string> ids;
        for (const auto& e: l.entries) {
            ids.insert(e.doc_id);
        }
        CHECK(ids.size() == l.entries.size());
        CHECK(reconstruct_list(make_log("q" + std::to_string(t), clicks), spec, p, hard).entries.size() ==
              l.entries.size());
    }
    NegSpec greedy{NegScheme::click_only, 0, 100, 1};
    CHECK_THROWS_AS(reconstruct_list(make_log("q", {1}), greedy, pool(5), {}), DataError);
}

TEST_CASE("listwise loss")
{
    for (std::size_t n: {2u, 10u, 60u}) {
        std::vector<double> s(n, 0.3);
        std::vector<int> y(n, 0);
        y[1] = 1;
        CHECK(listwise_loss(s, y) == doctest::Approx(std::log(static_cast<double>(n))));
    }
    std::vector<double> far{50.0, 0.0, 0.0};
    std::vector<int> y{1, 0, 0};
    CHECK(listwise_loss(far, y) < 1e-20);
    std::vector<int> none{0, 0, 0};
    CHECK_THROWS_AS(listwise_loss(far, none), DataError);
    std::vector<int> graded{2, 0, 0};
    CHECK_THROWS_AS(listwise_loss(far, graded), DataError);

    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        auto s = test::random_vector(rng, 15, 2.0);
        std::vector<int> lab(15, 0);
        lab[t % 15] = 1;
        lab[(t * 7) % 15] = 1;
        std::vector<double> g(15);
        listwise_loss(s, lab, g);
        std::vector<double> target(lab.begin(), lab.end());
        auto num = oracle::central_difference([&](const std::vector<double>& x) { return oracle::softmax_xent(x, target); }, s);
        CHECK(oracle::max_rel_error(g, num) < 1e-4);
    }
}

TEST_CASE("negsample lists and training on a small corpus")
{
    std::vector<Document> docs;
    std::vector<Query> queries{{"q0", "apple pie"}, {"q1", "banana bread"}};
    for (int d = 0; d < 80; ++d) {
        std::string t = d % 3 == 0 ? "apple pie recipe" : (d % 3 == 1 ? "banana bread" : "other words");
        docs.push_back({"d" + std::to_string(d), t + " " + std::to_string(d), "filler text " + t});
    }
    auto index = InvertedIndex::build(docs);
    std::vector<ClickLog> logs;
    for (int q = 0; q < 2; ++q) {
        ClickLog log;
        log.qid = "q" + std::to_string(q);
        for (std::size_t k = 0; k < kListLength; ++k) {
            log.ranked_docs[k] = "d" + std::to_string(q + 3 * k);
        }
        log.clicks[0] = q == 0;
        logs.push_back(log);
    }
    NegCorpus corpus{&queries, &docs, &index};
    NegSpec spec{NegScheme::click_only, 5, 3, 4};
    std::size_t skipped = 0;
    auto lists = build_negsample_lists(logs, corpus, spec, &skipped);
    CHECK(skipped == 1);
    REQUIRE(lists.size() == 1);
    CHECK(lists[0].features.size() == spec.list_length());
    CHECK(lists[0].features[0] == extract_features("apple pie", "d0", index));
    auto again = build_negsample_lists(logs, corpus, spec);
    CHECK(again[0].doc_ids == lists[0].doc_ids);
    CHECK(again[0].features == lists[0].features);

    auto cands_q0 = hard_candidates(tokenize("apple pie"), index, {"d0"}, 4);
    CHECK(cands_q0.size() == 4);
    for (const auto& c: cands_q0) {
        CHECK(c.first != "d0");
    }

    std::vector<EvalList> valid{{"q1", {"d1", "d2"}, {extract_features("banana bread", "d1", index),
                                                       extract_features("banana bread", "d2", index)}, {2, 0}}};
    NegTrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.max_epochs = 2;
    auto r = train_negsample(logs, valid, corpus, spec, cfg);
    CHECK(r.trained_queries == 1);
    CHECK(r.skipped_queries == 1);
    CHECK(r.curve.size() == 2);
    CHECK(format_checkpoint(r.best) == format_checkpoint(train_negsample(logs, valid, corpus, spec, cfg).best));
}
