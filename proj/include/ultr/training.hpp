#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ultr/corpus_io.hpp"
#include "ultr/nnrank.hpp"

namespace ultr {

/// One training query for the click-based trainers. Features are raw (unscaled).
struct TrainList {
    std::string qid;
    std::vector<std::string> doc_ids;
    std::vector<FeatureVector> features;
    std::vector<double> labels;               // clicks, corrected labels, or 0/1 targets
    std::vector<std::uint8_t> eligible;       // 1 where position weighting applies
};

/// One annotated query used for model selection.
struct EvalList {
    std::string qid;
    std::vector<std::string> doc_ids;
    std::vector<FeatureVector> features;
    std::vector<int> grades;
};

/// Deterministic qid-level split: a query is held out iff a seeded hash of its qid falls
/// below `fraction`.
bool in_holdout(const std::string& qid, double fraction, std::uint64_t split_seed);

using FeatureTable = std::map<std::pair<std::string, std::string>, FeatureVector>;
FeatureTable index_features(const std::vector<FeatureRow>& rows);

/// Click lists of non-held-out queries become TrainLists (labels = clicks, eligible = clicks);
/// held-out queries with judgments become EvalLists over every judged document of the query.
struct ClickDataset {
    std::vector<TrainList> train;
    std::vector<EvalList> valid;
};
ClickDataset build_click_dataset(const std::vector<ClickLog>& logs, const FeatureTable& features,
                                 const Qrels& judgments, double valid_fraction,
                                 std::uint64_t split_seed);

/// Mean nDCG@k of the model's ordering of every EvalList.
double mean_ndcg(const RankerModel& model, const std::vector<EvalList>& lists, std::size_t k = 10);
double mean_dcg(const RankerModel& model, const std::vector<EvalList>& lists, std::size_t k = 10);

/// Scores of the model for every document of every list, in list order.
Rankings score_lists(const RankerModel& model, const std::vector<EvalList>& lists);

struct EpochRecord {
    int epoch = 0;
    double primary_loss = 0.0;    // ranking loss (or the listwise loss)
    double secondary_loss = 0.0;  // observation loss; 0 for single-model trainers
    double valid_ndcg = 0.0;
};

struct LoopConfig {
    AdamWConfig ranker;
    AdamWConfig extra;  // optimizer of the auxiliary parameter block (propensity logits)
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 5;
    int min_epochs = 1;  // earlier epochs are neither selected nor counted toward patience
    std::uint64_t seed = 0;
};

struct LossParts {
    double primary = 0.0;
    double secondary = 0.0;
};

/// Loss and gradients of one training item. Gradients are accumulated into the zeroed spans.
using ItemGradient = std::function<LossParts(std::size_t item, const RankerParams& params,
                                             std::span<const double> extra,
                                             std::span<double> ranker_grad,
                                             std::span<double> extra_grad)>;

struct LoopResult {
    RankerParams best_params;
    std::vector<double> best_extra;
    std::vector<EpochRecord> curve;
    int best_epoch = 0;  // 0 only when no epoch ran
    double best_valid_ndcg = 0.0;
};

/// Seeded mini-batch AdamW loop: per-item gradients are averaged over each batch with an
/// ordered reduction, the model is validated after every epoch, and the best trained epoch is
/// kept. Stops after `patience` epochs without a strict improvement.
LoopResult run_training_loop(std::size_t n_items, RankerParams init, std::vector<double> extra_init,
                             bool train_extra, const ItemGradient& gradient,
                             const std::function<double(const RankerParams&)>& validate,
                             const LoopConfig& config);

}  // namespace ultr
