#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultr/corpus_io.hpp"
#include "ultr/nnrank.hpp"

namespace ultr {

/// `base`: the 24 matching features. `base_plus_model_score`: plus a 25th column holding the
/// score of a trained neural checkpoint.
enum class FeatureSet { base, base_plus_model_score };

FeatureSet parse_feature_set(std::string_view text);  // "base" / "add" (or the full name)
std::string_view to_string(FeatureSet set);

struct GbdtParams {
    int n_trees = 300;
    int max_depth = 4;
    int min_leaf_samples = 20;
    double learning_rate = 0.05;
    double l2_leaf = 0.0;
    FeatureSet feature_set = FeatureSet::base;
    double split_fraction = 0.8;     // share of queries used for boosting
    int early_stopping_rounds = 50;  // trees without a validation gain before stopping; 0 = off
    std::uint64_t seed = 0;

    void validate() const;
};

/// One annotated document with an arbitrary number of feature columns.
struct GbdtRow {
    std::string qid;
    std::string doc_id;
    int label = 0;
    std::vector<double> features;
};

std::vector<GbdtRow> gbdt_rows(const std::vector<FeatureRow>& rows);

/// Appends model.score_raw(row features) as a new last column. Rows must hold 24 features.
std::vector<GbdtRow> with_model_score(std::vector<GbdtRow> rows, const RankerModel& model);

struct LambdaGrads {
    std::vector<double> lambdas;   // ascent direction: positive pushes the score up
    std::vector<double> hessians;
};

/// LambdaRank for one query. For every pair with labels[i] > labels[j],
/// rho = 1 / (1 + exp(s_i - s_j)) and the pair adds rho * |delta nDCG@k| to lambda_i, subtracts
/// it from lambda_j, and adds rho * (1 - rho) * |delta nDCG@k| to both hessians. Positions come
/// from the current scores (descending, ties by index).
LambdaGrads lambdarank_gradients(std::span<const double> scores, std::span<const int> labels,
                                 std::size_t k = 10);

/// Rows grouped by query: `offsets` has one more entry than there are groups.
struct QueryGroups {
    std::vector<std::size_t> offsets;

    std::size_t size() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// lambdarank_gradients over every group, written into `lambdas` / `hessians`.
void lambdarank_batch_serial(const QueryGroups& groups, std::span<const double> scores,
                             std::span<const int> labels, std::size_t k, std::span<double> lambdas,
                             std::span<double> hessians);
void lambdarank_batch_omp(const QueryGroups& groups, std::span<const double> scores,
                          std::span<const int> labels, std::size_t k, std::span<double> lambdas,
                          std::span<double> hessians);

/// Binary regression tree. Internal nodes send x[feature] <= threshold to `left`.
struct TreeNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> x) const;
    int depth() const;
    bool operator==(const RegressionTree&) const = default;
};

/// Dense row-major feature matrix.
struct FeatureMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;

    double at(std::size_t row, std::size_t col) const { return values[row * n_cols + col]; }
    std::span<const double> row(std::size_t r) const
    {
        return std::span<const double>(values).subspan(r * n_cols, n_cols);
    }
};

/// Exact greedy tree on gradients `g` and hessians `h` (minimizing sum g*f + h*f^2/2).
/// Split gain is GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2); thresholds are midpoints between
/// consecutive distinct values; leaves hold -G/(H+l2). A node stays a leaf at max_depth, when
/// either child would have fewer than min_leaf_samples rows, or when no split has positive
/// gain. The _omp version searches features in parallel and returns the same tree.
RegressionTree fit_tree_serial(const FeatureMatrix& x, std::span<const double> g, std::span<const double> h,
                               const GbdtParams& params);
RegressionTree fit_tree_omp(const FeatureMatrix& x, std::span<const double> g, std::span<const double> h,
                            const GbdtParams& params);

struct GbdtModel {
    std::size_t n_features = 0;
    FeatureSet feature_set = FeatureSet::base;
    double learning_rate = 0.05;
    std::vector<RegressionTree> trees;

    /// sum over trees of learning_rate * tree(x).
    double predict(std::span<const double> x) const;
    bool operator==(const GbdtModel&) const = default;
};

/// Versioned text dump ("ultr-gbdt v1"); values round-trip exactly.
std::string format_gbdt(const GbdtModel& model);
GbdtModel parse_gbdt(std::string_view text);
void write_gbdt(const std::filesystem::path& path, const GbdtModel& model);
GbdtModel read_gbdt(const std::filesystem::path& path);

struct BoostRecord {
    int trees = 0;
    double train_ndcg = 0.0;
    double valid_ndcg = 0.0;
};

struct GbdtResult {
    GbdtModel model;  // truncated to the best validation iteration
    std::vector<BoostRecord> curve;
    int best_iteration = 0;
    std::vector<std::string> train_qids;
    std::vector<std::string> valid_qids;
};

/// Query-level split: queries are ordered by a seeded hash of their qid and the last
/// round(n * (1 - fraction)) of them (at least one, at most n - 1) are held out.
/// Throws DataError with fewer than 2 queries.
void split_queries(const std::vector<std::string>& qids, double fraction, std::uint64_t seed,
                   std::vector<std::string>& train, std::vector<std::string>& valid);

/// Mean nDCG@k over the queries of `rows`, ranking each query's rows by `scores`.
double rows_ndcg(const std::vector<GbdtRow>& rows, std::span<const double> scores, std::size_t k = 10);

/// LambdaMART on graded labels with early stopping on the held-out queries' nDCG@10.
GbdtResult train_lambdamart(const std::vector<GbdtRow>& rows, const GbdtParams& params);

}  // namespace ultr
