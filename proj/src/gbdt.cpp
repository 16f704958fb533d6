#include "ultr/gbdt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "ultr/kernels.hpp"
#include "ultr/metrics.hpp"

namespace ultr {

namespace {

    constexpr std::string_view kGbdtMagic = "ultr-gbdt";
    constexpr std::size_t kGbdtVersion = 1;

    double discount(std::size_t pos, std::size_t k)
    {
        return pos < k ? 1.0 / std::log2(static_cast<double>(pos) + 2.0) : 0.0;
    }

    double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

}  // namespace

FeatureSet parse_feature_set(std::string_view text)
{
    if (text == "base") {
        return FeatureSet::base;
    }
    if (text == "add" || text == "base_plus_model_score" || text == "base-plus-model-score") {
        return FeatureSet::base_plus_model_score;
    }
    throw DataError("unknown feature set '" + std::string(text) + "' (expected base or add)");
}

std::string_view to_string(FeatureSet set)
{
    return set == FeatureSet::base ? "base" : "base_plus_model_score";
}

void GbdtParams::validate() const
{
    if (n_trees < 1) {
        throw DataError("n_trees must be >= 1");
    }
    if (max_depth < 0) {
        throw DataError("max_depth must be >= 0");
    }
    if (min_leaf_samples < 1) {
        throw DataError("min_leaf_samples must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw DataError("learning_rate must be > 0");
    }
    if (!(l2_leaf >= 0.0) || !std::isfinite(l2_leaf)) {
        throw DataError("l2_leaf must be >= 0");
    }
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw DataError("split_fraction must be in (0, 1)");
    }
    if (early_stopping_rounds < 0) {
        throw DataError("early_stopping_rounds must be >= 0");
    }
}

std::vector<GbdtRow> gbdt_rows(const std::vector<FeatureRow>& rows)
{
    std::vector<GbdtRow> out;
    out.reserve(rows.size());
    for (const auto& r: rows) {
        out.push_back({r.qid, r.doc_id, r.label, std::vector<double>(r.features.begin(), r.features.end())});
    }
    return out;
}

std::vector<GbdtRow> with_model_score(std::vector<GbdtRow> rows, const RankerModel& model)
{
    for (const auto& r: rows) {
        if (r.features.size() != kNumFeatures) {
            throw DataError("model score needs rows with exactly 24 features");
        }
    }
    kernels::for_each_index_omp(rows.size(), [&](std::size_t i) {
        FeatureVector f{};
        std::copy(rows[i].features.begin(), rows[i].features.end(), f.begin());
        rows[i].features.push_back(model.score_raw(f));
    });
    return rows;
}

LambdaGrads lambdarank_gradients(std::span<const double> scores, std::span<const int> labels, std::size_t k)
{
    const std::size_t n = scores.size();
    if (labels.size() != n) {
        throw DataError("lambdarank: size mismatch");
    }
    LambdaGrads out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    if (n < 2 || k == 0) {
        return out;
    }
    std::vector<int> ideal(labels.begin(), labels.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t p = 0; p < std::min(k, n); ++p) {
        idcg += gain(ideal[p]) * discount(p, k);
    }
    if (idcg <= 0.0) {
        return out;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> pos(n);
    for (std::size_t p = 0; p < n; ++p) {
        pos[order[p]] = p;
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[i] <= labels[j]) {
                continue;
            }
            double delta = std::abs((gain(labels[i]) - gain(labels[j])) * (discount(pos[i], k) - discount(pos[j], k)))
                           / idcg;
            if (delta == 0.0) {
                continue;
            }
            double rho = 1.0 / (1.0 + std::exp(scores[i] - scores[j]));
            double lambda = rho * delta;
            double hess = rho * (1.0 - rho) * delta;
            out.lambdas[i] += lambda;
            out.lambdas[j] -= lambda;
            out.hessians[i] += hess;
            out.hessians[j] += hess;
        }
    }
    return out;
}

namespace {

    void lambdarank_group(const QueryGroups& groups, std::size_t q, std::span<const double> scores,
                          std::span<const int> labels, std::size_t k, std::span<double> lambdas,
                          std::span<double> hessians)
    {
        std::size_t lo = groups.offsets[q];
        std::size_t len = groups.offsets[q + 1] - lo;
        auto r = lambdarank_gradients(scores.subspan(lo, len), labels.subspan(lo, len), k);
        std::copy(r.lambdas.begin(), r.lambdas.end(), lambdas.begin() + static_cast<std::ptrdiff_t>(lo));
        std::copy(r.hessians.begin(), r.hessians.end(), hessians.begin() + static_cast<std::ptrdiff_t>(lo));
    }

}  // namespace

void lambdarank_batch_serial(const QueryGroups& groups, std::span<const double> scores,
                             std::span<const int> labels, std::size_t k, std::span<double> lambdas,
                             std::span<double> hessians)
{
    kernels::for_each_index_serial(groups.size(), [&](std::size_t q) {
        lambdarank_group(groups, q, scores, labels, k, lambdas, hessians);
    });
}

void lambdarank_batch_omp(const QueryGroups& groups, std::span<const double> scores,
                          std::span<const int> labels, std::size_t k, std::span<double> lambdas,
                          std::span<double> hessians)
{
    kernels::for_each_index_omp(groups.size(), [&](std::size_t q) {
        lambdarank_group(groups, q, scores, labels, k, lambdas, hessians);
    });
}

double RegressionTree::predict(std::span<const double> x) const
{
    if (nodes.empty()) {
        return 0.0;
    }
    std::size_t at = 0;
    while (!nodes[at].is_leaf()) {
        const auto& node = nodes[at];
        at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                   : node.right);
    }
    return nodes[at].value;
}

int RegressionTree::depth() const
{
    if (nodes.empty()) {
        return 0;
    }
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
        deepest = std::max(deepest, d[i]);
    }
    return deepest;
}

namespace {

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    class TreeBuilder {
      public:
        TreeBuilder(const FeatureMatrix& x, std::span<const double> g, std::span<const double> h,
                    const GbdtParams& params, bool parallel)
            : m_x(x), m_g(g), m_h(h), m_params(params), m_parallel(parallel), m_goes_left(x.n_rows, 0)
        {
        }

        RegressionTree build()
        {
            if (m_x.n_rows == 0) {
                throw DataError("fit_tree: no rows");
            }
            if (m_g.size() != m_x.n_rows || m_h.size() != m_x.n_rows) {
                throw DataError("fit_tree: gradient size mismatch");
            }
            std::vector<std::vector<std::uint32_t>> sorted(m_x.n_cols);
            for (std::size_t f = 0; f < m_x.n_cols; ++f) {
                sorted[f].resize(m_x.n_rows);
                std::iota(sorted[f].begin(), sorted[f].end(), 0u);
                std::stable_sort(sorted[f].begin(), sorted[f].end(),
                                 [&](std::uint32_t a, std::uint32_t b) { return m_x.at(a, f) < m_x.at(b, f); });
            }
            std::vector<std::uint32_t> rows(m_x.n_rows);
            std::iota(rows.begin(), rows.end(), 0u);
            m_tree.nodes.emplace_back();
            grow(0, rows, std::move(sorted), 0);
            return std::move(m_tree);
        }

      private:
        Split best_split_for(std::size_t f, const std::vector<std::uint32_t>& order, double g_total,
                             double h_total) const
        {
            Split best;
            const double l2 = m_params.l2_leaf;
            if (!(h_total + l2 > 0.0)) {
                return best;
            }
            const double parent = g_total * g_total / (h_total + l2);
            const auto min_leaf = static_cast<std::size_t>(m_params.min_leaf_samples);
            double gl = 0.0;
            double hl = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                gl += m_g[order[i]];
                hl += m_h[order[i]];
                double a = m_x.at(order[i], f);
                double b = m_x.at(order[i + 1], f);
                if (!(a < b) || i + 1 < min_leaf || order.size() - (i + 1) < min_leaf) {
                    continue;
                }
                double gr = g_total - gl;
                double hr = h_total - hl;
                if (!(hl + l2 > 0.0) || !(hr + l2 > 0.0)) {
                    continue;
                }
                double gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent;
                if (gain > best.gain) {
                    best = {static_cast<int>(f), a + (b - a) / 2.0, gain};
                }
            }
            return best;
        }

        void grow(std::size_t node, const std::vector<std::uint32_t>& rows,
                  std::vector<std::vector<std::uint32_t>> sorted, int depth)
        {
            double g_total = 0.0;
            double h_total = 0.0;
            for (auto r: rows) {
                g_total += m_g[r];
                h_total += m_h[r];
            }
            double denom = h_total + m_params.l2_leaf;
            m_tree.nodes[node].value = denom > 0.0 ? -g_total / denom : 0.0;

            const auto min_leaf = static_cast<std::size_t>(m_params.min_leaf_samples);
            if (depth >= m_params.max_depth || rows.size() < 2 * min_leaf || m_x.n_cols == 0) {
                return;
            }

            std::vector<Split> per_feature(m_x.n_cols);
            auto search = [&](std::size_t f) { per_feature[f] = best_split_for(f, sorted[f], g_total, h_total); };
            if (m_parallel) {
                kernels::for_each_index_omp(m_x.n_cols, search);
            } else {
                kernels::for_each_index_serial(m_x.n_cols, search);
            }
            Split best;
            for (const auto& s: per_feature) {
                if (s.feature >= 0 && s.gain > best.gain) {
                    best = s;
                }
            }
            if (best.feature < 0 || !(best.gain > 0.0)) {
                return;
            }

            const auto f = static_cast<std::size_t>(best.feature);
            std::vector<std::uint32_t> left_rows;
            std::vector<std::uint32_t> right_rows;
            for (auto r: rows) {
                bool left = m_x.at(r, f) <= best.threshold;
                m_goes_left[r] = left ? 1 : 0;
                (left ? left_rows : right_rows).push_back(r);
            }
            std::vector<std::vector<std::uint32_t>> left_sorted(m_x.n_cols);
            std::vector<std::vector<std::uint32_t>> right_sorted(m_x.n_cols);
            for (std::size_t c = 0; c < m_x.n_cols; ++c) {
                left_sorted[c].reserve(left_rows.size());
                right_sorted[c].reserve(right_rows.size());
                for (auto r: sorted[c]) {
                    (m_goes_left[r] ? left_sorted[c] : right_sorted[c]).push_back(r);
                }
            }
            sorted.clear();

            auto& n = m_tree.nodes[node];
            n.feature = best.feature;
            n.threshold = best.threshold;
            n.left = static_cast<int>(m_tree.nodes.size());
            n.right = n.left + 1;
            int left = n.left;
            int right = n.right;
            m_tree.nodes.emplace_back();
            m_tree.nodes.emplace_back();
            grow(static_cast<std::size_t>(left), left_rows, std::move(left_sorted), depth + 1);
            grow(static_cast<std::size_t>(right), right_rows, std::move(right_sorted), depth + 1);
        }

        const FeatureMatrix& m_x;
        std::span<const double> m_g;
        std::span<const double> m_h;
        const GbdtParams& m_params;
        bool m_parallel;
        std::vector<std::uint8_t> m_goes_left;
        RegressionTree m_tree;
    };

}  // namespace

RegressionTree fit_tree_serial(const FeatureMatrix& x, std::span<const double> g, std::span<const double> h,
                               const GbdtParams& params)
{
    return TreeBuilder(x, g, h, params, false).build();
}

RegressionTree fit_tree_omp(const FeatureMatrix& x, std::span<const double> g, std::span<const double> h,
                            const GbdtParams& params)
{
    return TreeBuilder(x, g, h, params, true).build();
}

double GbdtModel::predict(std::span<const double> x) const
{
    if (x.size() != n_features) {
        throw DataError("gbdt: expected " + std::to_string(n_features) + " features, got "
                        + std::to_string(x.size()));
    }
    double s = 0.0;
    for (const auto& t: trees) {
        s += learning_rate * t.predict(x);
    }
    return s;
}

std::string format_gbdt(const GbdtModel& model)
{
    std::string out = std::string(kGbdtMagic) + " v" + std::to_string(kGbdtVersion) + "\n";
    out += "n_features " + std::to_string(model.n_features) + "\n";
    out += "feature_set " + std::string(to_string(model.feature_set)) + "\n";
    out += "learning_rate " + format_double(model.learning_rate) + "\n";
    out += "trees " + std::to_string(model.trees.size()) + "\n";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& nodes = model.trees[t].nodes;
        out += "tree " + std::to_string(t) + " nodes " + std::to_string(nodes.size()) + "\n";
        for (const auto& n: nodes) {
            out += std::to_string(n.feature) + " " + format_double(n.threshold) + " " + std::to_string(n.left) + " "
                   + std::to_string(n.right) + " " + format_double(n.value) + "\n";
        }
    }
    return out;
}

namespace {

    class DumpReader {
      public:
        explicit DumpReader(std::string_view text) : m_in(std::string(text)) {}

        std::string word()
        {
            std::string w;
            if (!(m_in >> w)) {
                throw DataError("gbdt dump: unexpected end of input");
            }
            return w;
        }

        void expect(std::string_view w)
        {
            auto got = word();
            if (got != w) {
                throw DataError("gbdt dump: expected '" + std::string(w) + "', got '" + got + "'");
            }
        }

        long long integer()
        {
            auto w = word();
            long long v = 0;
            auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
            if (ec != std::errc{} || ptr != w.data() + w.size()) {
                throw DataError("gbdt dump: invalid integer '" + w + "'");
            }
            return v;
        }

        bool done()
        {
            m_in >> std::ws;
            return m_in.eof();
        }

      private:
        std::istringstream m_in;
    };

}  // namespace

GbdtModel parse_gbdt(std::string_view text)
{
    DumpReader r(text);
    r.expect(kGbdtMagic);
    r.expect("v" + std::to_string(kGbdtVersion));
    GbdtModel model;
    r.expect("n_features");
    long long nf = r.integer();
    if (nf < 0) {
        throw DataError("gbdt dump: negative feature count");
    }
    model.n_features = static_cast<std::size_t>(nf);
    r.expect("feature_set");
    model.feature_set = parse_feature_set(r.word());
    r.expect("learning_rate");
    model.learning_rate = parse_double(r.word());
    r.expect("trees");
    long long nt = r.integer();
    if (nt < 0) {
        throw DataError("gbdt dump: negative tree count");
    }
    for (long long t = 0; t < nt; ++t) {
        r.expect("tree");
        if (r.integer() != t) {
            throw DataError("gbdt dump: trees out of order");
        }
        r.expect("nodes");
        long long nn = r.integer();
        if (nn < 1) {
            throw DataError("gbdt dump: tree without nodes");
        }
        RegressionTree tree;
        for (long long i = 0; i < nn; ++i) {
            TreeNode n;
            n.feature = static_cast<int>(r.integer());
            n.threshold = parse_double(r.word());
            n.left = static_cast<int>(r.integer());
            n.right = static_cast<int>(r.integer());
            n.value = parse_double(r.word());
            if (!n.is_leaf()) {
                if (static_cast<std::size_t>(n.feature) >= model.n_features || n.left <= i || n.right <= i
                    || n.left >= nn || n.right >= nn) {
                    throw DataError("gbdt dump: invalid node in tree " + std::to_string(t));
                }
            }
            tree.nodes.push_back(n);
        }
        model.trees.push_back(std::move(tree));
    }
    if (!r.done()) {
        throw DataError("gbdt dump: trailing content");
    }
    return model;
}

void write_gbdt(const std::filesystem::path& path, const GbdtModel& model)
{
    write_file_atomic(path, format_gbdt(model));
}

GbdtModel read_gbdt(const std::filesystem::path& path) { return parse_gbdt(read_file(path)); }

void split_queries(const std::vector<std::string>& qids, double fraction, std::uint64_t seed,
                   std::vector<std::string>& train, std::vector<std::string>& valid)
{
    std::vector<std::string> unique = qids;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    if (unique.size() < 2) {
        throw DataError("gbdt training needs at least 2 queries");
    }
    std::vector<std::pair<std::uint64_t, std::string>> keyed;
    for (auto& q: unique) {
        keyed.emplace_back(mix64(mix64(seed) ^ fnv1a(q)), q);
    }
    std::sort(keyed.begin(), keyed.end());
    const auto n = keyed.size();
    auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - fraction)));
    n_valid = std::clamp<std::size_t>(n_valid, 1, n - 1);
    train.clear();
    valid.clear();
    for (std::size_t i = 0; i < n; ++i) {
        (i < n - n_valid ? train : valid).push_back(keyed[i].second);
    }
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
}

double rows_ndcg(const std::vector<GbdtRow>& rows, std::span<const double> scores, std::size_t k)
{
    if (scores.size() != rows.size()) {
        throw DataError("rows_ndcg: size mismatch");
    }
    std::map<std::string, std::vector<std::size_t>> by_qid;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        by_qid[rows[i].qid].push_back(i);
    }
    if (by_qid.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& [qid, idx]: by_qid) {
        std::vector<double> s;
        std::vector<std::string> ids;
        std::vector<int> grades;
        for (auto i: idx) {
            s.push_back(scores[i]);
            ids.push_back(rows[i].doc_id);
            grades.push_back(rows[i].label);
        }
        total += ndcg_at_k(grades_in_score_order(s, ids, grades), grades, k);
    }
    return total / static_cast<double>(by_qid.size());
}

namespace {

    struct GroupedRows {
        std::vector<GbdtRow> rows;
        QueryGroups groups;
        FeatureMatrix x;
        std::vector<int> labels;
    };

    GroupedRows group_rows(const std::vector<GbdtRow>& rows, const std::vector<std::string>& qids,
                           std::size_t n_features)
    {
        std::map<std::string, std::vector<std::size_t>> by_qid;
        for (const auto& q: qids) {
            by_qid[q];
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto it = by_qid.find(rows[i].qid);
            if (it != by_qid.end()) {
                it->second.push_back(i);
            }
        }
        GroupedRows out;
        out.groups.offsets.push_back(0);
        out.x.n_cols = n_features;
        for (const auto& [qid, idx]: by_qid) {
            for (auto i: idx) {
                out.rows.push_back(rows[i]);
                out.labels.push_back(rows[i].label);
                out.x.values.insert(out.x.values.end(), rows[i].features.begin(), rows[i].features.end());
            }
            out.groups.offsets.push_back(out.rows.size());
        }
        out.x.n_rows = out.rows.size();
        return out;
    }

}  // namespace

GbdtResult train_lambdamart(const std::vector<GbdtRow>& rows, const GbdtParams& params)
{
    params.validate();
    if (rows.empty()) {
        throw DataError("gbdt training needs at least 2 queries");
    }
    const std::size_t n_features = rows.front().features.size();
    std::vector<std::string> qids;
    for (const auto& r: rows) {
        if (r.features.size() != n_features) {
            throw DataError("gbdt rows have differing feature counts");
        }
        if (r.label < 0) {
            throw DataError("gbdt labels must be graded (>= 0)");
        }
        for (double v: r.features) {
            if (!std::isfinite(v)) {
                throw DataError("gbdt feature values must be finite");
            }
        }
        qids.push_back(r.qid);
    }
    std::size_t expected = params.feature_set == FeatureSet::base ? kNumFeatures : kNumFeatures + 1;
    if (n_features != expected) {
        throw DataError("feature set '" + std::string(to_string(params.feature_set)) + "' expects "
                        + std::to_string(expected) + " features, rows have " + std::to_string(n_features));
    }

    GbdtResult result;
    split_queries(qids, params.split_fraction, params.seed, result.train_qids, result.valid_qids);
    auto train = group_rows(rows, result.train_qids, n_features);
    auto valid = group_rows(rows, result.valid_qids, n_features);

    GbdtModel model;
    model.n_features = n_features;
    model.feature_set = params.feature_set;
    model.learning_rate = params.learning_rate;

    std::vector<double> train_scores(train.x.n_rows, 0.0);
    std::vector<double> valid_scores(valid.x.n_rows, 0.0);
    std::vector<double> lambdas(train.x.n_rows);
    std::vector<double> hessians(train.x.n_rows);
    std::vector<double> grads(train.x.n_rows);

    double best = rows_ndcg(valid.rows, valid_scores);
    result.best_iteration = 0;
    int since_best = 0;
    for (int t = 0; t < params.n_trees; ++t) {
        lambdarank_batch_omp(train.groups, train_scores, train.labels, 10, lambdas, hessians);
        for (std::size_t i = 0; i < grads.size(); ++i) {
            grads[i] = -lambdas[i];
        }
        auto tree = fit_tree_omp(train.x, grads, hessians, params);
        for (std::size_t i = 0; i < train.x.n_rows; ++i) {
            train_scores[i] += params.learning_rate * tree.predict(train.x.row(i));
        }
        for (std::size_t i = 0; i < valid.x.n_rows; ++i) {
            valid_scores[i] += params.learning_rate * tree.predict(valid.x.row(i));
        }
        model.trees.push_back(std::move(tree));

        BoostRecord rec;
        rec.trees = t + 1;
        rec.train_ndcg = rows_ndcg(train.rows, train_scores);
        rec.valid_ndcg = rows_ndcg(valid.rows, valid_scores);
        result.curve.push_back(rec);
        if (rec.valid_ndcg > best || result.best_iteration == 0) {
            best = rec.valid_ndcg;
            result.best_iteration = t + 1;
            since_best = 0;
        } else if (params.early_stopping_rounds > 0 && ++since_best >= params.early_stopping_rounds) {
            break;
        }
    }
    model.trees.resize(static_cast<std::size_t>(result.best_iteration));
    result.model = std::move(model);
    return result;
}

}  // namespace ultr
