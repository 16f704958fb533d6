#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ultr/training.hpp"

using namespace ultr;

namespace {

/// Pulls the first parameter toward 1; the validation score is scripted per epoch.
struct Scripted {
    std::vector<double> script;
    int calls = 0;

    double operator()(const RankerParams&)
    {
        double v = script[static_cast<std::size_t>(std::min<int>(calls, static_cast<int>(script.size()) - 1))];
        ++calls;
        return v;
    }
};

LossParts pull(std::size_t, const RankerParams& p, std::span<const double>, std::span<double> g, std::span<double>)
{
    g[0] += p.flat()[0] - 1.0;
    return {0.5 * (p.flat()[0] - 1.0) * (p.flat()[0] - 1.0), 0.0};
}

LoopConfig quick(int max_epochs, int patience, int min_epochs = 1)
{
    LoopConfig c;
    c.ranker.lr = 0.01;
    c.ranker.weight_decay = 0.0;
    c.batch_size = 4;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.min_epochs = min_epochs;
    c.seed = 1;
    return c;
}

}  // namespace

TEST_CASE("holdout split is deterministic and near the requested share")
{
    int held = 0;
    for (int i = 0; i < 10000; ++i) {
        auto q = "q" + std::to_string(i);
        CHECK(in_holdout(q, 0.2, 7) == in_holdout(q, 0.2, 7));
        held += in_holdout(q, 0.2, 7);
    }
    CHECK(std::abs(held / 10000.0 - 0.2) < 0.02);
    CHECK_FALSE(in_holdout("q1", 0.0, 7));
    CHECK(in_holdout("q1", 1.0, 7));
}

TEST_CASE("click dataset construction")
{
    std::mt19937_64 rng(1);
    std::vector<ClickLog> logs;
    std::vector<FeatureRow> rows;
    Qrels judged;
    for (int q = 0; q < 50; ++q) {
        ClickLog log;
        log.qid = "q" + std::to_string(q);
        for (std::size_t k = 0; k < kListLength; ++k) {
            log.ranked_docs[k] = "d" + std::to_string(k);
            log.clicks[k] = k == 2;
            rows.push_back({0, log.qid, test::random_features(rng), log.ranked_docs[k]});
            judged[log.qid][log.ranked_docs[k]] = static_cast<int>(k % 3);
        }
        rows.push_back({0, log.qid, test::random_features(rng), "extra"});
        judged[log.qid]["extra"] = 4;
        logs.push_back(log);
    }
    auto table = index_features(rows);
    auto ds = build_click_dataset(logs, table, judged, 0.2, 7);
    CHECK(ds.train.size() + ds.valid.size() == 50);
    for (const auto& t: ds.train) {
        CHECK_FALSE(in_holdout(t.qid, 0.2, 7));
        CHECK(t.labels[2] == 1.0);
        CHECK(t.eligible[2] == 1);
        CHECK(t.eligible[0] == 0);
        CHECK(t.features[3] == table.at({t.qid, "d3"}));
    }
    for (const auto& v: ds.valid) {
        CHECK(in_holdout(v.qid, 0.2, 7));
        CHECK(v.doc_ids.size() == kListLength + 1);  // every judged document
    }
    rows.push_back(rows.front());
    CHECK_THROWS_AS(index_features(rows), DataError);
    Qrels none;
    CHECK_THROWS_AS(build_click_dataset(logs, FeatureTable{}, none, 0.2, 7), DataError);
}

TEST_CASE("training loop keeps the best epoch and stops on patience")
{
    Scripted v{{0.1, 0.5, 0.3, 0.4, 0.45, 0.9}};
    auto r = run_training_loop(8, RankerParams{}, {}, false, pull, std::ref(v), quick(20, 3));
    CHECK(r.curve.size() == 5);
    CHECK(r.best_epoch == 2);
    CHECK(r.best_valid_ndcg == 0.5);
    CHECK(r.curve[3].valid_ndcg == 0.4);
    CHECK(r.best_params.flat()[0] > 0.0);
    CHECK(r.best_params.flat()[0] < 1.0);
}

TEST_CASE("min_epochs excludes warm-up epochs from selection")
{
    Scripted v{{0.9, 0.1, 0.2, 0.15}};
    auto r = run_training_loop(8, RankerParams{}, {}, false, pull, std::ref(v), quick(4, 5, 2));
    CHECK(r.best_epoch == 3);
    CHECK(r.best_valid_ndcg == 0.2);

    Scripted w{{0.9}};
    auto only = run_training_loop(8, RankerParams{}, {}, false, pull, std::ref(w), quick(1, 5, 3));
    CHECK(only.best_epoch == 1);
}

TEST_CASE("training loop is deterministic and handles edge cases")
{
    auto noisy = [](std::size_t item, const RankerParams& p, std::span<const double> extra, std::span<double> g,
                    std::span<double> ge) {
        g[0] += p.flat()[0] - static_cast<double>(item);
        g[5] += 0.001 * static_cast<double>(item * item);
        ge[0] += extra[0] - 2.0;
        return LossParts{static_cast<double>(item), 1.0};
    };
    auto val = [](const RankerParams& p) { return -std::abs(p.flat()[0] - 3.0); };
    auto a = run_training_loop(13, RankerParams{}, {0.0}, true, noisy, val, quick(6, 10));
    auto b = run_training_loop(13, RankerParams{}, {0.0}, true, noisy, val, quick(6, 10));
    CHECK(a.best_params == b.best_params);
    CHECK(a.best_extra == b.best_extra);
    CHECK(a.best_extra[0] > 0.0);
    CHECK(a.curve.size() == 6);
    CHECK(a.curve[0].primary_loss == doctest::Approx(6.0));
    CHECK(a.curve[0].secondary_loss == doctest::Approx(1.0));

    auto frozen = run_training_loop(13, RankerParams{}, {0.0}, false, noisy, val, quick(2, 10));
    CHECK(frozen.best_extra[0] == 0.0);

    auto none = run_training_loop(0, RankerParams{}, {}, false, noisy, val, quick(3, 2));
    CHECK(none.best_epoch == 0);
    CHECK(none.curve.empty());
    CHECK_THROWS_AS(run_training_loop(1, RankerParams{}, {}, false, noisy, val, quick(3, 0)), DataError);
}
