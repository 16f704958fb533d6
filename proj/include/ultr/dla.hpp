#pragma once

#include <array>
#include <span>
#include <vector>

#include "ultr/nnrank.hpp"
#include "ultr/training.hpp"

namespace ultr {

/// One logit per display position; the propensity model depends on position only.
using PropensityParams = PropensityLogits;

/// P(o = 1 | position) as the softmax over the ten position logits.
std::array<double, kListLength> propensity_probs(const PropensityParams& logits);

/// weight[x] = min(p[0] / p[x], cap), so weight[0] is exactly 1. Throws DataError when a
/// probability is not positive.
std::vector<double> ipw_rank_weights(std::span<const double> probs, double cap);

/// -sum over clicked x of weights[x] * clicks[x] * log softmax(scores)[x]. The weights are
/// constants: no gradient flows back into the propensity model through this loss.
double ranking_loss(std::span<const double> scores, std::span<const double> clicks,
                    std::span<const double> weights, std::span<double> grad_scores = {});

/// Mirror of ranking_loss with the roles of the two models swapped: softmax over the position
/// logits, weighted by the relevance ratios derived from the ranker.
double observation_loss(std::span<const double> logits, std::span<const double> clicks,
                        std::span<const double> relevance_weights, std::span<double> grad_logits = {});

struct DlaConfig {
    double lr = 5e-6;
    double propensity_lr = 1e-2;
    double weight_decay = 0.01;
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 5;
    int min_epochs = 1;
    double ipw_cap = 10.0;
    std::uint64_t seed = 0;
    /// false: naive click baseline; every weight is 1 and the propensity model is frozen.
    bool use_ipw = true;
};

struct DlaResult {
    Checkpoint best;  // propensity is always set
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    double best_valid_ndcg = 0.0;
};

/// Loss parts and gradients of one list under the dual objective. Exposed for gradient checks.
/// `scaled` holds the list's scaled features; `labels`/`eligible` follow TrainList.
LossParts dla_list_gradient(const RankerParams& params, std::span<const FeatureVector> scaled,
                            std::span<const double> labels, std::span<const std::uint8_t> eligible,
                            const PropensityParams& logits, double ipw_cap, bool use_ipw,
                            std::span<double> ranker_grad, std::span<double> propensity_grad);

/// Joint training of the ranker and the propensity model with simultaneous AdamW steps on
/// every batch. Losses are summed within a query and averaged over the queries of a batch.
/// `init` continues from an existing checkpoint (scaler included); otherwise the scaler is
/// fitted on the training rows and both models start fresh.
DlaResult train_dla(const std::vector<TrainList>& train, const std::vector<EvalList>& valid,
                    const DlaConfig& config, const Checkpoint* init = nullptr);

/// p[0] / p[k] for every position, from the learned logits.
std::array<double, kListLength> propensity_ratios(const PropensityParams& logits);

}  // namespace ultr
