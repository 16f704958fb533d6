#include "ultr/dla.hpp"

#include <algorithm>
#include <cmath>

namespace ultr {

std::array<double, kListLength> propensity_probs(const PropensityParams& logits)
{
    auto p = softmax_probs(logits);
    std::array<double, kListLength> out{};
    std::copy(p.begin(), p.end(), out.begin());
    return out;
}

std::vector<double> ipw_rank_weights(std::span<const double> probs, double cap)
{
    if (probs.empty()) {
        throw DataError("ipw weights of an empty list");
    }
    std::vector<double> w(probs.size());
    for (std::size_t x = 0; x < probs.size(); ++x) {
        if (!(probs[x] > 0.0)) {
            throw DataError("ipw weights need positive probabilities");
        }
        w[x] = x == 0 ? 1.0 : std::min(probs[0] / probs[x], cap);
    }
    return w;
}

namespace {

    double weighted_loss(std::span<const double> scores, std::span<const double> clicks,
                         std::span<const double> weights, std::span<double> grad)
    {
        if (clicks.size() != scores.size() || weights.size() != scores.size()) {
            throw DataError("dual loss: size mismatch");
        }
        std::vector<double> targets(scores.size());
        for (std::size_t x = 0; x < scores.size(); ++x) {
            targets[x] = clicks[x] * weights[x];
        }
        return weighted_softmax_xent(scores, targets, grad);
    }

}  // namespace

double ranking_loss(std::span<const double> scores, std::span<const double> clicks,
                    std::span<const double> weights, std::span<double> grad_scores)
{
    return weighted_loss(scores, clicks, weights, grad_scores);
}

double observation_loss(std::span<const double> logits, std::span<const double> clicks,
                        std::span<const double> relevance_weights, std::span<double> grad_logits)
{
    return weighted_loss(logits, clicks, relevance_weights, grad_logits);
}

LossParts dla_list_gradient(const RankerParams& params, std::span<const FeatureVector> scaled,
                            std::span<const double> labels, std::span<const std::uint8_t> eligible,
                            const PropensityParams& logits, double ipw_cap, bool use_ipw,
                            std::span<double> ranker_grad, std::span<double> propensity_grad)
{
    const std::size_t n = scaled.size();
    if (n != kListLength || labels.size() != n || eligible.size() != n) {
        throw DataError("dual loss: lists must have exactly 10 entries");
    }
    std::array<Activations, kListLength> cache;
    std::array<double, kListLength> f{};
    for (std::size_t x = 0; x < n; ++x) {
        f[x] = forward(params, scaled[x], &cache[x]);
    }

    // Position weights for the ranker. Items whose label did not come from a click keep
    // weight 1: their non-click says nothing about examination.
    std::array<double, kListLength> rank_w{};
    rank_w.fill(1.0);
    if (use_ipw) {
        auto obs = propensity_probs(logits);
        auto w = ipw_rank_weights(obs, ipw_cap);
        for (std::size_t x = 0; x < n; ++x) {
            if (eligible[x]) {
                rank_w[x] = w[x];
            }
        }
    }
    std::array<double, kListLength> df{};
    LossParts parts;
    parts.primary = ranking_loss(f, labels, rank_w, df);
    for (std::size_t x = 0; x < n; ++x) {
        if (df[x] != 0.0) {
            backward(params, cache[x], df[x], ranker_grad);
        }
    }

    if (use_ipw) {
        auto rel = softmax_probs(f);
        auto v = ipw_rank_weights(rel, ipw_cap);
        // Only click-derived labels are evidence of examination.
        std::array<double, kListLength> obs_labels{};
        for (std::size_t x = 0; x < n; ++x) {
            obs_labels[x] = eligible[x] ? labels[x] : 0.0;
        }
        parts.secondary = observation_loss(logits, obs_labels, v, propensity_grad);
    }
    return parts;
}

DlaResult train_dla(const std::vector<TrainList>& train, const std::vector<EvalList>& valid,
                    const DlaConfig& config, const Checkpoint* init)
{
    if (!(config.ipw_cap >= 1.0)) {
        throw DataError("ipw_cap must be >= 1");
    }
    for (const auto& t: train) {
        if (t.features.size() != kListLength || t.labels.size() != kListLength
            || t.eligible.size() != kListLength) {
            throw DataError("training list '" + t.qid + "' must have exactly 10 entries");
        }
    }

    RankerModel model;
    PropensityParams logits{};
    if (init) {
        model = init->model;
        if (init->propensity) {
            logits = *init->propensity;
        }
    } else {
        std::vector<FeatureVector> rows;
        for (const auto& t: train) {
            rows.insert(rows.end(), t.features.begin(), t.features.end());
        }
        model.scaler = FeatureScaler::fit(rows);
        model.params = RankerParams::glorot_uniform(derive_seed(config.seed, "ranker"));
    }

    std::vector<std::vector<FeatureVector>> scaled(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (const auto& f: train[i].features) {
            scaled[i].push_back(model.scaler.apply(f));
        }
    }

    LoopConfig loop;
    loop.ranker = AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
    loop.extra = AdamWConfig{config.propensity_lr, 0.9, 0.999, 1e-8, 0.0};
    loop.batch_size = config.batch_size;
    loop.max_epochs = config.max_epochs;
    loop.patience = config.patience;
    loop.min_epochs = config.min_epochs;
    loop.seed = config.seed;

    auto gradient = [&](std::size_t item, const RankerParams& params, std::span<const double> extra,
                        std::span<double> ranker_grad, std::span<double> extra_grad) {
        PropensityParams g{};
        std::copy(extra.begin(), extra.end(), g.begin());
        return dla_list_gradient(params, scaled[item], train[item].labels, train[item].eligible, g,
                                 config.ipw_cap, config.use_ipw, ranker_grad, extra_grad);
    };
    auto validate = [&](const RankerParams& params) {
        return mean_ndcg(RankerModel{model.scaler, params}, valid);
    };

    auto loop_result = run_training_loop(train.size(), model.params,
                                         std::vector<double>(logits.begin(), logits.end()),
                                         config.use_ipw, gradient, validate, loop);

    DlaResult out;
    out.best.model = RankerModel{model.scaler, loop_result.best_params};
    PropensityParams best_logits{};
    std::copy(loop_result.best_extra.begin(), loop_result.best_extra.end(), best_logits.begin());
    out.best.propensity = best_logits;
    out.curve = std::move(loop_result.curve);
    out.best_epoch = loop_result.best_epoch;
    out.best_valid_ndcg = loop_result.best_valid_ndcg;
    return out;
}

std::array<double, kListLength> propensity_ratios(const PropensityParams& logits)
{
    std::array<double, kListLength> r{};
    for (std::size_t k = 0; k < kListLength; ++k) {
        r[k] = std::exp(logits[0] - logits[k]);
    }
    return r;
}

}  // namespace ultr
