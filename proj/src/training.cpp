#include "ultr/training.hpp"

#include <algorithm>
#include <numeric>

#include "ultr/kernels.hpp"
#include "ultr/metrics.hpp"

namespace ultr {

bool in_holdout(const std::string& qid, double fraction, std::uint64_t split_seed)
{
    auto h = mix64(mix64(split_seed) ^ fnv1a(qid));
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < fraction;
}

FeatureTable index_features(const std::vector<FeatureRow>& rows)
{
    FeatureTable table;
    for (const auto& r: rows) {
        if (!table.emplace(std::make_pair(r.qid, r.doc_id), r.features).second) {
            throw DataError("duplicate feature row for (" + r.qid + ", " + r.doc_id + ")");
        }
    }
    return table;
}

ClickDataset build_click_dataset(const std::vector<ClickLog>& logs, const FeatureTable& features,
                                 const Qrels& judgments, double valid_fraction,
                                 std::uint64_t split_seed)
{
    auto lookup = [&](const std::string& qid, const std::string& doc) -> const FeatureVector& {
        auto it = features.find({qid, doc});
        if (it == features.end()) {
            throw DataError("no features for (" + qid + ", " + doc + ")");
        }
        return it->second;
    };

    ClickDataset out;
    for (const auto& log: logs) {
        if (in_holdout(log.qid, valid_fraction, split_seed)) {
            auto judged = judgments.find(log.qid);
            if (judged == judgments.end()) {
                continue;
            }
            EvalList e;
            e.qid = log.qid;
            for (const auto& [doc, grade]: judged->second) {
                e.doc_ids.push_back(doc);
                e.features.push_back(lookup(log.qid, doc));
                e.grades.push_back(grade);
            }
            out.valid.push_back(std::move(e));
        } else {
            TrainList t;
            t.qid = log.qid;
            for (std::size_t k = 0; k < kListLength; ++k) {
                t.doc_ids.push_back(log.ranked_docs[k]);
                t.features.push_back(lookup(log.qid, log.ranked_docs[k]));
                t.labels.push_back(log.clicks[k]);
                t.eligible.push_back(log.clicks[k]);
            }
            out.train.push_back(std::move(t));
        }
    }
    return out;
}

namespace {

    std::vector<double> list_scores(const RankerModel& model, const EvalList& list)
    {
        std::vector<FeatureVector> scaled;
        scaled.reserve(list.features.size());
        for (const auto& f: list.features) {
            scaled.push_back(model.scaler.apply(f));
        }
        std::vector<double> s(scaled.size());
        kernels::score_rows_serial(model.params, scaled, s);
        return s;
    }

    template <typename Metric>
    double mean_over_lists(const RankerModel& model, const std::vector<EvalList>& lists, Metric metric)
    {
        if (lists.empty()) {
            return 0.0;
        }
        std::vector<double> per_list(lists.size());
        kernels::for_each_index_omp(lists.size(), [&](std::size_t i) {
            auto s = list_scores(model, lists[i]);
            auto ranked = grades_in_score_order(s, lists[i].doc_ids, lists[i].grades);
            per_list[i] = metric(ranked, lists[i].grades);
        });
        double total = 0.0;
        for (double v: per_list) {
            total += v;
        }
        return total / static_cast<double>(lists.size());
    }

}  // namespace

double mean_ndcg(const RankerModel& model, const std::vector<EvalList>& lists, std::size_t k)
{
    return mean_over_lists(model, lists, [k](const std::vector<int>& ranked, const std::vector<int>& ideal) {
        return ndcg_at_k(ranked, ideal, k);
    });
}

double mean_dcg(const RankerModel& model, const std::vector<EvalList>& lists, std::size_t k)
{
    return mean_over_lists(model, lists, [k](const std::vector<int>& ranked, const std::vector<int>&) {
        return dcg_at_k(ranked, k);
    });
}

Rankings score_lists(const RankerModel& model, const std::vector<EvalList>& lists)
{
    Rankings out;
    for (const auto& list: lists) {
        auto s = list_scores(model, list);
        std::vector<ScoredDoc> docs;
        for (std::size_t i = 0; i < s.size(); ++i) {
            docs.push_back({list.doc_ids[i], s[i]});
        }
        out.emplace_back(list.qid, std::move(docs));
    }
    return out;
}

LoopResult run_training_loop(std::size_t n_items, RankerParams init, std::vector<double> extra_init,
                             bool train_extra, const ItemGradient& gradient,
                             const std::function<double(const RankerParams&)>& validate,
                             const LoopConfig& config)
{
    if (config.batch_size < 1 || config.max_epochs < 0 || config.patience < 1 || config.min_epochs < 1) {
        throw DataError("training loop: batch_size, patience, min_epochs must be >= 1 and max_epochs >= 0");
    }
    RankerParams params = std::move(init);
    std::vector<double> extra = std::move(extra_init);
    const std::size_t n_params = RankerParams::num_params();
    const std::size_t n_extra = extra.size();
    const std::size_t dim = n_params + n_extra + 2;

    AdamWState ranker_state(n_params, config.ranker);
    AdamWState extra_state(n_extra, config.extra);

    LoopResult result;
    result.best_params = params;
    result.best_extra = extra;
    if (config.max_epochs == 0 || n_items == 0) {
        result.best_valid_ndcg = validate(params);
        return result;
    }

    std::vector<std::size_t> order(n_items);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "shuffle"));
    std::vector<double> sum(dim);
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs && n_items > 0; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double primary = 0.0;
        double secondary = 0.0;
        for (std::size_t start = 0; start < n_items; start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n_items - start);
            kernels::reduce_ordered_omp(
                batch, dim,
                [&](std::size_t i, std::span<double> slot) {
                    auto parts = gradient(order[start + i], params, extra, slot.first(n_params),
                                          slot.subspan(n_params, n_extra));
                    slot[n_params + n_extra] = parts.primary;
                    slot[n_params + n_extra + 1] = parts.secondary;
                },
                sum);
            const double inv = 1.0 / static_cast<double>(batch);
            for (std::size_t d = 0; d < n_params + n_extra; ++d) {
                sum[d] *= inv;
            }
            adamw_update(params.flat(), std::span<const double>(sum).first(n_params), ranker_state);
            if (train_extra && n_extra > 0) {
                adamw_update(extra, std::span<const double>(sum).subspan(n_params, n_extra), extra_state);
            }
            primary += sum[n_params + n_extra];
            secondary += sum[n_params + n_extra + 1];
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.primary_loss = primary / static_cast<double>(n_items);
        rec.secondary_loss = secondary / static_cast<double>(n_items);
        rec.valid_ndcg = validate(params);
        result.curve.push_back(rec);
        if (epoch < config.min_epochs && epoch < config.max_epochs) {
            continue;
        }
        if (result.best_epoch == 0 || rec.valid_ndcg > result.best_valid_ndcg) {
            result.best_valid_ndcg = rec.valid_ndcg;
            result.best_params = params;
            result.best_extra = extra;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    return result;
}

}  // namespace ultr
