// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "../common/oracles.hpp"
#include "../common/pipeline.hpp"
#include "ultr/dla.hpp"
#include "ultr/gbdt.hpp"
#include "ultr/kernels.hpp"
#include "ultr/labelfix.hpp"
#include "ultr/metrics.hpp"
#include "ultr/negsample.hpp"
#include "ultr/simulate.hpp"
#include "ultr/textfeat.hpp"
#include "ultr/training.hpp"

using namespace ultr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x: v) {
        x = d(rng);
    }
    return v;
}

FeatureVector random_features(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureVector f{};
    for (auto& v: f) {
        v = n(rng);
    }
    return f;
}

/// A simulated corpus with clicks, features for every judged pair, and the 80/20 query split.
struct Lab {
    SimSpec spec;
    SimCorpus corpus;
    std::vector<ClickLog> logs;
    InvertedIndex index;
    ClickDataset data;
    std::vector<ClickLog> train_logs;
};

Lab make_lab(const SimSpec& spec)
{
    Lab lab;
    lab.spec = spec;
    lab.corpus = generate_corpus(spec);
    lab.logs = simulate_clicks(lab.corpus.lists, lab.corpus.truth, spec.eta, spec.click_noise, spec.seed);
    if (spec.false_negative_min > 0) {
        apply_false_negative_stress(lab.logs, lab.corpus.truth, spec.false_negative_min, spec.seed);
    }
    lab.index = InvertedIndex::build(lab.corpus.docs);

    std::map<std::string, std::string> text;
    for (const auto& q: lab.corpus.queries) {
        text[q.qid] = q.text;
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& [q, docs]: lab.corpus.truth.grades) {
        for (const auto& [d, g]: docs) {
            pairs.emplace_back(q, d);
        }
    }
    std::vector<FeatureVector> feats(pairs.size());
    kernels::for_each_index_omp(pairs.size(), [&](std::size_t i) {
        feats[i] = extract_features(text[pairs[i].first], pairs[i].second, lab.index);
    });
    FeatureTable table;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        table[pairs[i]] = feats[i];
    }
    lab.data = build_click_dataset(lab.logs, table, lab.corpus.truth.grades, 0.2, 7);
    for (const auto& l: lab.logs) {
        if (!in_holdout(l.qid, 0.2, 7)) {
            lab.train_logs.push_back(l);
        }
    }
    return lab;
}

SimSpec base_spec(std::size_t n_queries, std::uint64_t seed)
{
    SimSpec s;
    s.n_queries = n_queries;
    s.n_docs = n_queries * 20;
    s.vocab_size = 5000;
    s.seed = seed;
    return s;
}

const std::vector<double> kHighPrior{0.1, 0.15, 0.25, 0.25, 0.25};

/// Stress corpus: noisy text, keyword spam hidden from the logging ranker, a shared topic
/// vocabulary, and false negatives.
SimSpec stress_spec(std::uint64_t seed, int false_negatives)
{
    SimSpec s = base_spec(1000, seed);
    s.grade_prior = kHighPrior;
    s.text_noise = 0.5;
    s.spam_rate = 0.8;
    s.spam_visibility = 0.0;
    s.topic_vocab = 300;
    s.click_noise = 0.3;
    s.eta = 1.0;
    s.false_negative_min = false_negatives;
    return s;
}

// ---------------------------------------------------------------------------------------------

Outcome gradients()
{
    auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 120;
    double worst_rank = 0.0;
    double worst_obs = 0.0;
    double worst_list = 0.0;
    double worst_lambda = 0.0;

    auto params = RankerParams::glorot_uniform(17);
    for (int t = 0; t < n; ++t) {
        // ranking loss: IPW-weighted softmax cross-entropy over (soft) labels, w.r.t. scores
        auto s = random_vector(rng, kListLength, 2.0);
        std::vector<double> labels(kListLength);
        std::vector<double> w(kListLength);
        for (std::size_t i = 0; i < kListLength; ++i) {
            labels[i] = u(rng) < 0.3 ? 1.0 : (u(rng) < 0.3 ? u(rng) : 0.0);
            w[i] = 1.0 + 9.0 * u(rng);
        }
        labels[static_cast<std::size_t>(t) % kListLength] = 1.0;
        std::vector<double> g(kListLength);
        ranking_loss(s, labels, w, g);
        std::vector<double> target(kListLength);
        for (std::size_t i = 0; i < kListLength; ++i) {
            target[i] = labels[i] * w[i];
        }
        auto num = oracle::central_difference([&](const std::vector<double>& x) { return oracle::softmax_xent(x, target); }, s);
        worst_rank = std::max(worst_rank, oracle::max_rel_error(g, num));

        // observation loss w.r.t. the position logits, through the full dual-loss gradient
        std::vector<FeatureVector> x;
        std::vector<std::uint8_t> eligible(kListLength);
        std::vector<int> elig_int(kListLength);
        for (std::size_t i = 0; i < kListLength; ++i) {
            x.push_back(random_features(rng));
            eligible[i] = labels[i] == 1.0;
            elig_int[i] = eligible[i];
        }
        PropensityParams logits{};
        for (auto& l: logits) {
            l = u(rng) - 0.5;
        }
        std::vector<double> lg(logits.begin(), logits.end());
        std::vector<double> rg(RankerParams::num_params(), 0.0);
        std::vector<double> pg(kListLength, 0.0);
        dla_list_gradient(params, x, labels, eligible, logits, 10.0, true, rg, pg);
        std::vector<double> f;
        for (const auto& fv: x) {
            f.push_back(oracle::mlp_forward(params.flat(), std::vector<double>(fv.begin(), fv.end())));
        }
        auto num_p = oracle::central_difference(
            [&](const std::vector<double>& l) { return oracle::dla_observation(l, f, labels, elig_int, 10.0); }, lg);
        worst_obs = std::max(worst_obs, oracle::max_rel_error(pg, num_p));

        // listwise loss over a reconstructed list with binary labels
        std::size_t len = 10 + static_cast<std::size_t>(t % 40);
        auto ls = random_vector(rng, len, 2.0);
        std::vector<int> y(len, 0);
        y[0] = 1;
        y[len / 2] = u(rng) < 0.5;
        std::vector<double> lgrad(len);
        listwise_loss(ls, y, lgrad);
        std::vector<double> yt(y.begin(), y.end());
        auto num_l = oracle::central_difference([&](const std::vector<double>& v) { return oracle::softmax_xent(v, yt); }, ls);
        worst_list = std::max(worst_list, oracle::max_rel_error(lgrad, num_l));

        // lambdas as the negative gradient of the pairwise surrogate with frozen deltas
        std::size_t m = 2 + static_cast<std::size_t>(t % 19);
        auto ss = random_vector(rng, m);
        std::vector<int> gy(m);
        for (auto& v: gy) {
            v = static_cast<int>(rng() % 5);
        }
        std::size_t k = 1 + static_cast<std::size_t>(t % 12);
        auto r = lambdarank_gradients(ss, gy, k);
        auto deltas = oracle::pair_deltas(ss, gy, k);
        auto num_lam = oracle::central_difference(
            [&](const std::vector<double>& v) { return -oracle::lambda_surrogate(v, gy, deltas); }, ss);
        worst_lambda = std::max(worst_lambda, oracle::max_rel_error(r.lambdas, num_lam));
    }
    double secs = seconds_since(t0);
    double worst = std::max({worst_rank, worst_obs, worst_list, worst_lambda});
    Outcome o;
    o.pass = worst < 1e-4 && secs < 60.0;
    o.detail = std::to_string(n) + " instances each; max rel err ranking " + fmt("%.2e", worst_rank) + ", observation " +
               fmt("%.2e", worst_obs) + ", listwise " + fmt("%.2e", worst_list) + ", lambdas " +
               fmt("%.2e", worst_lambda) + "; " + fmt("%.1fs", secs);
    return o;
}

DlaConfig propensity_config(std::uint64_t seed)
{
    DlaConfig c;
    c.lr = 1e-5;
    c.propensity_lr = 0.005;
    c.batch_size = 16;
    c.max_epochs = 50;
    c.patience = 5;
    c.min_epochs = 10;
    c.seed = seed;
    return c;
}

Outcome propensity_recovery()
{
    auto t0 = Clock::now();
    auto spec = base_spec(2500, 1);
    spec.grade_prior = kHighPrior;
    spec.click_noise = 0.5;
    spec.production_noise = 10.0;

    Outcome o;
    spec.eta = 1.0;
    auto biased = make_lab(spec);
    auto r1 = train_dla(biased.data.train, biased.data.valid, propensity_config(1));
    auto ratios1 = propensity_ratios(*r1.best.propensity);
    double err1 = 0.0;
    std::size_t at1 = 0;
    for (std::size_t k = 0; k < kListLength; ++k) {
        double e = std::abs(ratios1[k] - static_cast<double>(k + 1)) / static_cast<double>(k + 1);
        if (e > err1) {
            err1 = e;
            at1 = k + 1;
        }
    }

    spec.eta = 0.0;
    auto flat = make_lab(spec);
    auto r0 = train_dla(flat.data.train, flat.data.valid, propensity_config(1));
    double err0 = 0.0;
    for (double v: propensity_ratios(*r0.best.propensity)) {
        err0 = std::max(err0, std::abs(v - 1.0));
    }
    double secs = seconds_since(t0);
    o.pass = err1 < 0.15 && err0 < 0.10 && secs < 300.0;
    o.detail = std::to_string(biased.data.train.size()) + " training queries; eta=1 max rel err " + fmt("%.3f", err1) +
               " (position " + std::to_string(at1) + "), eta=0 max |ratio-1| " + fmt("%.3f", err0) + "; " +
               fmt("%.0fs", secs);
    return o;
}

Outcome debiasing()
{
    double gap = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto spec = base_spec(2500, seed);
        spec.click_noise = 0.1;
        spec.production_noise = 1.0;
        spec.length_bias = 1.5;
        spec.text_noise = 1.0;
        spec.eta = 1.0;
        auto lab = make_lab(spec);
        DlaConfig cfg;
        cfg.lr = 1e-4;
        cfg.propensity_lr = 0.005;
        cfg.max_epochs = 50;
        cfg.patience = 5;
        cfg.seed = seed;
        auto dla = train_dla(lab.data.train, lab.data.valid, cfg);
        cfg.use_ipw = false;
        auto naive = train_dla(lab.data.train, lab.data.valid, cfg);
        double d = dla.best_valid_ndcg - naive.best_valid_ndcg;
        gap += d / 3.0;
        per_seed += fmt(" %+.4f", d);
    }
    return {gap >= 0.01, "mean DLA - no-IPW nDCG@10 " + fmt("%+.4f", gap) + " (seeds:" + per_seed + ")"};
}

Outcome label_correction()
{
    int sig_wins = 0;
    double sig_mean = 0.0;
    double min_mean = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto lab = make_lab(stress_spec(seed, 3));
        DlaConfig cfg;
        cfg.lr = 1e-5;
        cfg.propensity_lr = 0.005;
        cfg.max_epochs = 50;
        cfg.patience = 5;
        cfg.seed = seed;
        auto dla = train_dla(lab.data.train, lab.data.valid, cfg);
        auto sig = train_dla_lc(lab.data.train, lab.data.valid, dla.best, LcInit::scratch, CorrectionMode::sig, cfg);
        auto mn = train_dla_lc(lab.data.train, lab.data.valid, dla.best, LcInit::scratch, CorrectionMode::min, cfg);
        sig_wins += sig.best_valid_ndcg > dla.best_valid_ndcg;
        sig_mean += sig.best_valid_ndcg / 3.0;
        min_mean += mn.best_valid_ndcg / 3.0;
        per_seed += " [dla " + fmt("%.4f", dla.best_valid_ndcg) + " sig " + fmt("%.4f", sig.best_valid_ndcg) + " min " +
                    fmt("%.4f", mn.best_valid_ndcg) + "]";
    }
    return {sig_wins >= 2 && sig_mean >= min_mean,
            "sig > DLA on " + std::to_string(sig_wins) + "/3 seeds; mean sig " + fmt("%.4f", sig_mean) + " vs min " +
                fmt("%.4f", min_mean) + per_seed};
}

Outcome negative_sampling()
{
    auto lab = make_lab(stress_spec(1, 0));
    NegCorpus corpus{&lab.corpus.queries, &lab.corpus.docs, &lab.index};
    NegTrainConfig cfg;
    cfg.lr = 1e-5;
    cfg.max_epochs = 30;
    cfg.patience = 5;
    cfg.seed = 1;
    auto run = [&](NegScheme scheme, int n_hard) {
        NegSpec spec{scheme, n_hard, 0, 1};
        return train_negsample(lab.train_logs, lab.data.valid, corpus, spec, cfg).best_valid_ndcg;
    };
    double click_only = run(NegScheme::click_only, 50);
    double last_click = run(NegScheme::last_click, 50);
    std::vector<double> sweep{click_only};
    for (int n_hard: {60, 70, 80, 90}) {
        sweep.push_back(run(NegScheme::click_only, n_hard));
    }
    int inversions = 0;
    std::string curve;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        inversions += i > 0 && sweep[i] < sweep[i - 1];
        curve += fmt(" %.4f", sweep[i]);
    }
    return {click_only >= last_click && inversions <= 1,
            "click-only " + fmt("%.4f", click_only) + " vs last-click " + fmt("%.4f", last_click) +
                "; n_hard 50..90:" + curve + " (" + std::to_string(inversions) + " inversions)"};
}

Outcome metric_oracle()
{
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<int> len(1, 6);
    std::uniform_int_distribution<int> grade(0, 4);
    int bad = 0;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<int> g(static_cast<std::size_t>(len(rng)));
        for (auto& x: g) {
            x = grade(rng);
        }
        std::vector<int> shuffled = g;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t k: {std::size_t{1}, std::size_t{3}, std::size_t{10}}) {
            double brute = oracle::brute_force_ideal_dcg(g, k);
            double ndcg = ndcg_at_k(shuffled, g, k);
            if (!(ndcg >= 0.0 && ndcg <= 1.0)) {
                ++bad;
            }
            double want = brute == 0.0 ? 0.0 : oracle::dcg(shuffled, k) / brute;
            worst = std::max(worst, std::abs(ndcg - want));
        }
    }
    return {bad == 0 && worst < 1e-12,
            "1000 lists x k in {1,3,10}; max |nDCG - dcg/brute ideal| " + fmt("%.1e", worst) + ", out of [0,1]: " +
                std::to_string(bad)};
}

Outcome retrieval_oracle()
{
    auto toy = oracle::toy_docs();
    std::vector<Document> docs;
    for (const auto& d: toy) {
        docs.push_back({d.id, d.title, d.abstract});
    }
    auto idx = InvertedIndex::build(docs);
    double worst = 0.0;
    auto pairs = oracle::toy_pairs();
    for (const auto& p: pairs) {
        auto got = extract_features(p.query, toy[p.doc].id, idx);
        auto q = oracle::words(p.query);
        for (int field = 0; field < 3; ++field) {
            auto want = oracle::field_features(q, toy, p.doc, field);
            for (std::size_t slot = 0; slot < kFeaturesPerField; ++slot) {
                worst = std::max(worst, oracle::rel_error(got[field * kFeaturesPerField + slot], want[slot], 1e-12));
            }
        }
    }

    std::mt19937_64 rng(707);
    std::uniform_int_distribution<int> n_docs(1, 100);
    std::uniform_int_distribution<int> word(0, 29);
    std::uniform_int_distribution<int> wlen(0, 12);
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Document> corpus;
        int n = n_docs(rng);
        auto text = [&] {
            std::string s;
            for (int i = wlen(rng); i > 0; --i) {
                s += "w" + std::to_string(word(rng)) + " ";
            }
            return s;
        };
        for (int d = 0; d < n; ++d) {
            corpus.push_back({"doc" + std::to_string(d), text(), text()});
        }
        auto index = InvertedIndex::build(corpus);
        std::vector<std::string> q{"w" + std::to_string(word(rng)), "w" + std::to_string(word(rng))};
        for (auto field: kAllFields) {
            std::vector<std::pair<std::string, double>> brute;
            for (std::size_t d = 0; d < corpus.size(); ++d) {
                double s = bm25_score(q, d, field, index);
                if (s > 0.0) {
                    brute.emplace_back(corpus[d].doc_id, s);
                }
            }
            std::sort(brute.begin(), brute.end(),
                      [](auto& a, auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
            std::size_t k = 1 + static_cast<std::size_t>(trial % 15);
            brute.resize(std::min(k, brute.size()));
            auto got = retrieve_topk(q, index, k, field);
            if (got.size() != brute.size()) {
                ++mismatches;
                continue;
            }
            for (std::size_t i = 0; i < got.size(); ++i) {
                mismatches += got[i].first != brute[i].first || oracle::rel_error(got[i].second, brute[i].second) > 1e-12;
            }
        }
    }
    return {pairs.size() == 20 && worst < 1e-9 && mismatches == 0,
            "24 features x " + std::to_string(pairs.size()) + " toy pairs, max rel err " + fmt("%.1e", worst) +
                "; top-k vs exhaustive on 50 corpora x 3 fields, mismatches " + std::to_string(mismatches)};
}

Outcome gbdt_sanity()
{
    auto spec = base_spec(300, 8);
    auto lab = make_lab(spec);
    std::map<std::string, std::string> text;
    for (const auto& q: lab.corpus.queries) {
        text[q.qid] = q.text;
    }
    std::vector<GbdtRow> rows;
    for (const auto& [q, docs]: lab.corpus.truth.grades) {
        for (const auto& [d, g]: docs) {
            GbdtRow r;
            r.qid = q;
            r.doc_id = d;
            r.label = g;
            auto f = extract_features(text[q], d, lab.index);
            r.features.assign(f.begin(), f.end());
            r.features.push_back(static_cast<double>(g));  // injected oracle score
            rows.push_back(std::move(r));
        }
    }
    GbdtParams p;
    p.feature_set = FeatureSet::base_plus_model_score;
    p.n_trees = 50;
    p.early_stopping_rounds = 0;
    auto r = train_lambdamart(rows, p);
    double best_train = 0.0;
    int reached = 0;
    for (const auto& c: r.curve) {
        best_train = std::max(best_train, c.train_ndcg);
        if (reached == 0 && c.train_ndcg >= 1.0 - 1e-12) {
            reached = c.trees;
        }
    }

    std::mt19937_64 rng(808);
    double worst_sum = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::size_t n = 2 + rng() % 60;
        auto s = random_vector(rng, n, 3.0);
        std::vector<int> y(n);
        for (auto& v: y) {
            v = static_cast<int>(rng() % 5);
        }
        if (t % 3 == 0) {
            for (std::size_t i = 1; i < n; i += 2) {
                s[i] = s[i - 1];  // ties
            }
        }
        auto g = lambdarank_gradients(s, y, 1 + static_cast<std::size_t>(t % 20));
        double sum = 0.0;
        for (double v: g.lambdas) {
            sum += v;
        }
        worst_sum = std::max(worst_sum, std::abs(sum));
    }
    return {reached > 0 && worst_sum <= 1e-10,
            "train nDCG@10 " + fmt("%.6f", best_train) +
                (reached ? " reached 1.0 at tree " + std::to_string(reached) : std::string(" never reached 1.0")) +
                " (" + std::to_string(r.train_qids.size()) + " train queries); max |sum of lambdas| over 1000 queries " +
                fmt("%.1e", worst_sum)};
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    auto base = fs::temp_directory_path() / ("ultr-acceptance-" + std::to_string(std::random_device{}()));
    fs::remove_all(base);
    Outcome o;
    try {
        auto a = pipeline::run_all(base / "a", 5);
        auto b = pipeline::run_all(base / "b", 5);
        std::vector<std::string> differ;
        for (const auto& [key, bytes]: a) {
            auto it = b.find(key);
            if (it == b.end() || it->second != bytes || bytes.empty()) {
                differ.push_back(key);
            }
        }
        o.pass = differ.empty() && a.size() == b.size();
        o.detail = std::to_string(a.size()) + " outputs compared";
        for (const auto& k: differ) {
            o.detail += "; differs or empty: " + k;
        }
    } catch (const std::exception& e) {
        o.detail = std::string("pipeline failed: ") + e.what();
    }
    fs::remove_all(base);
    return o;
}

}  // namespace

// Optional arguments: criterion numbers to run (default all).
int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradients},
        {"propensity recovery", propensity_recovery},
        {"debiasing effect", debiasing},
        {"label-correction effect", label_correction},
        {"negative-sampling effect", negative_sampling},
        {"metric oracle", metric_oracle},
        {"retrieval/feature oracle", retrieval_oracle},
        {"gbdt sanity", gbdt_sanity},
        {"determinism", determinism},
    };
    std::set<std::size_t> only;
    for (int a = 1; a < argc; ++a) {
        only.insert(static_cast<std::size_t>(std::atoi(argv[a])));
    }
    int failed = 0;
    int ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) {
            continue;
        }
        ++ran;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %zu %-26s %s  %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", ran - failed, ran);
    return failed == 0 ? 0 : 1;
}
