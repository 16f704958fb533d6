#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ultr/textfeat.hpp"
#include "ultr/training.hpp"

namespace ultr {

enum class NegScheme { click_only, last_click };

NegScheme parse_neg_scheme(std::string_view text);  // "click-only" / "last-click" (underscores accepted)
std::string_view to_string(NegScheme scheme);

struct NegSpec {
    NegScheme scheme = NegScheme::click_only;
    int n_hard = 0;
    int n_random = 0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t list_length() const { return kListLength + static_cast<std::size_t>(n_random + n_hard); }
};

enum class NegOrigin : std::uint8_t { kept, random_neg, hard_neg };

struct NegEntry {
    std::string doc_id;
    int label = 0;
    NegOrigin origin = NegOrigin::kept;
};

struct ReconstructedList {
    std::string qid;
    std::vector<NegEntry> entries;

    std::size_t num_positive() const;
};

/// BM25 candidates per query: the top `pool` documents that are not in `exclude`.
inline constexpr std::size_t kHardPool = 200;
std::vector<std::pair<std::string, double>> hard_candidates(std::span<const std::string> query_terms,
                                                            const InvertedIndex& index,
                                                            const std::set<std::string>& exclude,
                                                            std::size_t pool = kHardPool);

/// Gaussian hard-negative selection: the max- and min-score candidates, then n - 2 picks of
/// the unused candidate nearest to a Normal(mean, std) draw (ties by doc id). Returns every
/// candidate when there are at most n of them.
std::vector<std::string> sample_hard_negatives(const std::vector<std::pair<std::string, double>>& candidates,
                                               std::size_t n, std::uint64_t seed,
                                               const std::set<std::string>& exclude = {});

/// Keeps the clicked items (click_only) or the prefix up to the last click (last_click), fills
/// to 10 with random negatives, then appends n_random random and n_hard hard negatives. Random
/// negatives come uniformly from `random_pool` minus the original list and earlier picks; a
/// hard-negative shortfall is made up with extra random negatives so every list has the same
/// length.
ReconstructedList reconstruct_list(const ClickLog& log, const NegSpec& spec,
                                   std::span<const std::string> random_pool,
                                   const std::vector<std::string>& hard_negs);

/// -sum over label-1 items of log softmax(scores). Throws DataError without a positive item.
double listwise_loss(std::span<const double> scores, std::span<const int> labels,
                     std::span<double> grad_scores = {});

struct NegTrainConfig {
    double lr = 5e-6;
    double weight_decay = 0.01;
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 5;
    int min_epochs = 1;
    std::uint64_t seed = 0;
};

struct NegsampleResult {
    Checkpoint best;
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    double best_valid_ndcg = 0.0;
    std::size_t trained_queries = 0;
    std::size_t skipped_queries = 0;  // no positive item after reconstruction
};

struct NegCorpus {
    const std::vector<Query>* queries = nullptr;
    const std::vector<Document>* docs = nullptr;
    const InvertedIndex* index = nullptr;
};

/// Reconstructed training lists with features computed through `index` for every entry.
std::vector<TrainList> build_negsample_lists(const std::vector<ClickLog>& logs, const NegCorpus& corpus,
                                             const NegSpec& spec, std::size_t* skipped = nullptr);

NegsampleResult train_negsample(const std::vector<ClickLog>& train_logs, const std::vector<EvalList>& valid,
                                const NegCorpus& corpus, const NegSpec& spec, const NegTrainConfig& config);

}  // namespace ultr
