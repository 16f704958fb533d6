#include "ultr/negsample.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "ultr/kernels.hpp"

namespace ultr {

NegScheme parse_neg_scheme(std::string_view text)
{
    if (text == "click-only" || text == "click_only") {
        return NegScheme::click_only;
    }
    if (text == "last-click" || text == "last_click") {
        return NegScheme::last_click;
    }
    throw DataError("unknown scheme '" + std::string(text) + "' (expected click-only or last-click)");
}

std::string_view to_string(NegScheme scheme)
{
    return scheme == NegScheme::click_only ? "click-only" : "last-click";
}

void NegSpec::validate() const
{
    if (n_hard < 0 || n_hard > static_cast<int>(kHardPool)) {
        throw DataError("n_hard must be in [0, 200]");
    }
    if (n_random < 0) {
        throw DataError("n_random must be >= 0");
    }
}

std::size_t ReconstructedList::num_positive() const
{
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const NegEntry& e) { return e.label == 1; }));
}

std::vector<std::pair<std::string, double>> hard_candidates(std::span<const std::string> query_terms,
                                                            const InvertedIndex& index,
                                                            const std::set<std::string>& exclude,
                                                            std::size_t pool)
{
    std::vector<std::pair<std::string, double>> out;
    if (pool == 0) {
        return out;
    }
    for (auto& c: retrieve_topk(query_terms, index, pool + exclude.size())) {
        if (!exclude.count(c.first) && out.size() < pool) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<std::string> sample_hard_negatives(const std::vector<std::pair<std::string, double>>& candidates,
                                               std::size_t n, std::uint64_t seed,
                                               const std::set<std::string>& exclude)
{
    std::vector<std::pair<std::string, double>> cands;
    for (const auto& c: candidates) {
        if (!exclude.count(c.first)) {
            cands.push_back(c);
        }
    }
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    if (cands.size() <= n) {
        for (auto& c: cands) {
            out.push_back(c.first);
        }
        return out;
    }
    if (n == 0) {
        return out;
    }
    std::vector<bool> used(cands.size(), false);
    out.push_back(cands.front().first);
    used.front() = true;
    if (n == 1) {
        return out;
    }
    out.push_back(cands.back().first);
    used.back() = true;

    double mean = 0.0;
    for (const auto& c: cands) {
        mean += c.second;
    }
    mean /= static_cast<double>(cands.size());
    double var = 0.0;
    for (const auto& c: cands) {
        var += (c.second - mean) * (c.second - mean);
    }
    double sd = std::sqrt(var / static_cast<double>(cands.size()));

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    while (out.size() < n) {
        double target = mean + sd * gauss(rng);
        std::size_t best = cands.size();
        double best_gap = 0.0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (used[i]) {
                continue;
            }
            double gap = std::abs(cands[i].second - target);
            if (best == cands.size() || gap < best_gap || (gap == best_gap && cands[i].first < cands[best].first)) {
                best = i;
                best_gap = gap;
            }
        }
        used[best] = true;
        out.push_back(cands[best].first);
    }
    return out;
}

ReconstructedList reconstruct_list(const ClickLog& log, const NegSpec& spec,
                                   std::span<const std::string> random_pool,
                                   const std::vector<std::string>& hard_negs)
{
    spec.validate();
    ReconstructedList out;
    out.qid = log.qid;
    std::set<std::string> taken(log.ranked_docs.begin(), log.ranked_docs.end());

    std::size_t last = 0;
    for (std::size_t k = 0; k < kListLength; ++k) {
        if (log.clicks[k]) {
            last = k + 1;
        }
    }
    for (std::size_t k = 0; k < kListLength; ++k) {
        bool keep = spec.scheme == NegScheme::click_only ? log.clicks[k] != 0 : k < last;
        if (keep) {
            out.entries.push_back({log.ranked_docs[k], log.clicks[k] ? 1 : 0, NegOrigin::kept});
        }
    }

    std::vector<std::string> hard;
    for (const auto& d: hard_negs) {
        if (hard.size() < static_cast<std::size_t>(spec.n_hard) && taken.insert(d).second) {
            hard.push_back(d);
        }
    }

    std::size_t need = kListLength - out.entries.size() + static_cast<std::size_t>(spec.n_random)
                       + (static_cast<std::size_t>(spec.n_hard) - hard.size());
    if (need > 0) {
        Rng rng(derive_seed(spec.seed, "random:" + log.qid));
        std::vector<std::string> picks;
        // Rejection sampling is uniform over the untaken ids; a crowded pool falls back to an
        // explicit shuffle of what is left.
        std::size_t attempts = 64 * need + 1024;
        if (!random_pool.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, random_pool.size() - 1);
            std::set<std::string> drawn = taken;
            while (picks.size() < need && attempts-- > 0) {
                const auto& d = random_pool[pick(rng)];
                if (drawn.insert(d).second) {
                    picks.push_back(d);
                }
            }
        }
        if (picks.size() < need) {
            std::vector<std::string> avail;
            for (const auto& d: random_pool) {
                if (!taken.count(d)) {
                    avail.push_back(d);
                }
            }
            std::sort(avail.begin(), avail.end());
            avail.erase(std::unique(avail.begin(), avail.end()), avail.end());
            if (avail.size() < need) {
                throw DataError("random pool too small for query '" + log.qid + "'");
            }
            std::shuffle(avail.begin(), avail.end(), rng);
            picks.assign(avail.begin(), avail.begin() + static_cast<std::ptrdiff_t>(need));
        }
        for (auto& d: picks) {
            out.entries.push_back({std::move(d), 0, NegOrigin::random_neg});
        }
    }
    for (auto& d: hard) {
        out.entries.push_back({std::move(d), 0, NegOrigin::hard_neg});
    }
    return out;
}

double listwise_loss(std::span<const double> scores, std::span<const int> labels, std::span<double> grad_scores)
{
    if (scores.size() != labels.size()) {
        throw DataError("listwise_loss: size mismatch");
    }
    std::vector<double> targets(labels.size());
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw DataError("listwise_loss: labels must be 0 or 1");
        }
        targets[i] = labels[i];
        any = any || labels[i] == 1;
    }
    if (!any) {
        throw DataError("listwise_loss: no positive item");
    }
    return weighted_softmax_xent(scores, targets, grad_scores);
}

std::vector<TrainList> build_negsample_lists(const std::vector<ClickLog>& logs, const NegCorpus& corpus,
                                             const NegSpec& spec, std::size_t* skipped)
{
    spec.validate();
    if (!corpus.queries || !corpus.docs || !corpus.index) {
        throw DataError("negative sampling needs queries, documents and an index");
    }
    std::map<std::string, const Query*> by_qid;
    for (const auto& q: *corpus.queries) {
        by_qid[q.qid] = &q;
    }
    std::vector<std::string> pool;
    pool.reserve(corpus.docs->size());
    for (const auto& d: *corpus.docs) {
        pool.push_back(d.doc_id);
    }

    std::vector<std::optional<TrainList>> built(logs.size());
    kernels::for_each_index_omp(logs.size(), [&](std::size_t i) {
        const auto& log = logs[i];
        auto q = by_qid.find(log.qid);
        if (q == by_qid.end()) {
            throw DataError("no query text for '" + log.qid + "'");
        }
        auto terms = tokenize(q->second->text);
        std::set<std::string> original(log.ranked_docs.begin(), log.ranked_docs.end());
        std::vector<std::string> hard;
        if (spec.n_hard > 0) {
            auto cands = hard_candidates(terms, *corpus.index, original);
            hard = sample_hard_negatives(cands, static_cast<std::size_t>(spec.n_hard),
                                         derive_seed(spec.seed, "hard:" + log.qid), original);
        }
        auto list = reconstruct_list(log, spec, pool, hard);
        if (list.num_positive() == 0) {
            return;
        }
        TrainList t;
        t.qid = log.qid;
        for (const auto& e: list.entries) {
            t.doc_ids.push_back(e.doc_id);
            t.features.push_back(extract_features(terms, corpus.index->doc_index(e.doc_id), *corpus.index));
            t.labels.push_back(e.label);
            t.eligible.push_back(0);
        }
        built[i] = std::move(t);
    });

    std::vector<TrainList> out;
    std::size_t skip = 0;
    for (auto& b: built) {
        if (b) {
            out.push_back(std::move(*b));
        } else {
            ++skip;
        }
    }
    if (skipped) {
        *skipped = skip;
    }
    return out;
}

NegsampleResult train_negsample(const std::vector<ClickLog>& train_logs, const std::vector<EvalList>& valid,
                                const NegCorpus& corpus, const NegSpec& spec, const NegTrainConfig& config)
{
    NegsampleResult out;
    auto lists = build_negsample_lists(train_logs, corpus, spec, &out.skipped_queries);
    out.trained_queries = lists.size();

    RankerModel model;
    std::vector<FeatureVector> rows;
    for (const auto& t: lists) {
        rows.insert(rows.end(), t.features.begin(), t.features.end());
    }
    model.scaler = FeatureScaler::fit(rows);
    model.params = RankerParams::glorot_uniform(derive_seed(config.seed, "ranker"));

    std::vector<std::vector<FeatureVector>> scaled(lists.size());
    std::vector<std::vector<int>> labels(lists.size());
    for (std::size_t i = 0; i < lists.size(); ++i) {
        for (std::size_t j = 0; j < lists[i].features.size(); ++j) {
            scaled[i].push_back(model.scaler.apply(lists[i].features[j]));
            labels[i].push_back(static_cast<int>(lists[i].labels[j]));
        }
    }

    LoopConfig loop;
    loop.ranker = AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
    loop.batch_size = config.batch_size;
    loop.max_epochs = config.max_epochs;
    loop.patience = config.patience;
    loop.min_epochs = config.min_epochs;
    loop.seed = config.seed;

    auto gradient = [&](std::size_t item, const RankerParams& params, std::span<const double>,
                        std::span<double> ranker_grad, std::span<double>) {
        const auto& rows_i = scaled[item];
        std::vector<Activations> cache(rows_i.size());
        std::vector<double> f(rows_i.size());
        for (std::size_t j = 0; j < rows_i.size(); ++j) {
            f[j] = forward(params, rows_i[j], &cache[j]);
        }
        std::vector<double> df(rows_i.size());
        LossParts parts;
        parts.primary = listwise_loss(f, labels[item], df);
        for (std::size_t j = 0; j < rows_i.size(); ++j) {
            if (df[j] != 0.0) {
                backward(params, cache[j], df[j], ranker_grad);
            }
        }
        return parts;
    };
    auto validate = [&](const RankerParams& params) {
        return mean_ndcg(RankerModel{model.scaler, params}, valid);
    };

    auto res = run_training_loop(lists.size(), model.params, {}, false, gradient, validate, loop);
    out.best.model = RankerModel{model.scaler, res.best_params};
    out.curve = std::move(res.curve);
    out.best_epoch = res.best_epoch;
    out.best_valid_ndcg = res.best_valid_ndcg;
    return out;
}

}  // namespace ultr
