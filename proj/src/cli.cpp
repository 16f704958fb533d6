#include "ultr/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ultr/kernels.hpp"
#include "ultr/metrics.hpp"
#include "ultr/simulate.hpp"
#include "ultr/textfeat.hpp"

namespace ultr::cli {

using json = nlohmann::json;

namespace {

    constexpr std::string_view kTool = "ultrlab";

    const std::vector<std::string> kMethods{"dla", "naive", "dla-lc", "negsample", "gbdt"};

    template<typename Fn>
    auto usage_guard(const std::string& key, Fn&& fn)
    {
        try {
            return fn();
        } catch (const DataError& e) {
            throw UsageError("recipe key '" + key + "': " + e.what());
        }
    }

    std::string hex64(std::uint64_t v)
    {
        std::ostringstream s;
        s << std::hex << std::setw(16) << std::setfill('0') << v;
        return s.str();
    }

    std::string jsonl(const std::vector<json>& records)
    {
        std::string out;
        for (const auto& r: records) {
            out += r.dump();
            out += '\n';
        }
        return out;
    }

    json epoch_record(const EpochRecord& e)
    {
        return json{{"type", "epoch"},
                    {"epoch", e.epoch},
                    {"ranking_loss", e.primary_loss},
                    {"observation_loss", e.secondary_loss},
                    {"valid_ndcg@10", e.valid_ndcg}};
    }

}  // namespace

const std::vector<std::string>& TrainRecipe::keys()
{
    static const std::vector<std::string> k{
        "method",        "seed",           "clicks",          "features",         "judgments",
        "docs",          "queries",        "aux_ckpt",        "corrected_labels", "model_score_ckpt",
        "labels",        "lr",             "propensity_lr",   "weight_decay",     "batch_size",
        "max_epochs",    "patience",       "min_epochs",      "ipw_cap",          "valid_fraction",
        "split_seed",    "allow_any_lr",   "correction",      "init",             "scheme",
        "n_hard",        "n_random",       "n_trees",         "max_depth",        "min_leaf_samples",
        "gbdt_learning_rate", "l2_leaf",   "feature_set",     "split_fraction",   "early_stopping_rounds"};
    return k;
}

TrainRecipe TrainRecipe::from_key_values(const KeyValues& kv)
{
    for (const auto& [k, v]: kv) {
        if (std::find(keys().begin(), keys().end(), k) == keys().end()) {
            throw UsageError("recipe: unknown key '" + k + "'");
        }
    }
    TrainRecipe r;
    auto str = [&](const char* key, std::string& dst) { dst = kv_string(kv, key, dst); };
    auto real = [&](const char* key, double& dst) { dst = usage_guard(key, [&] { return kv_double(kv, key, dst); }); };
    auto integer = [&](const char* key, int& dst) {
        dst = static_cast<int>(usage_guard(key, [&] { return kv_int(kv, key, dst); }));
    };
    auto seed = [&](const char* key, std::uint64_t& dst) {
        long long v = usage_guard(key, [&] { return kv_int(kv, key, static_cast<long long>(dst)); });
        if (v < 0) {
            throw UsageError(std::string("recipe key '") + key + "' must be >= 0");
        }
        dst = static_cast<std::uint64_t>(v);
    };

    str("method", r.method);
    seed("seed", r.seed);
    str("clicks", r.clicks);
    str("features", r.features);
    str("judgments", r.judgments);
    str("docs", r.docs);
    str("queries", r.queries);
    str("aux_ckpt", r.aux_ckpt);
    str("corrected_labels", r.corrected_labels);
    str("model_score_ckpt", r.model_score_ckpt);
    str("labels", r.labels);
    real("lr", r.lr);
    real("propensity_lr", r.propensity_lr);
    real("weight_decay", r.weight_decay);
    integer("batch_size", r.batch_size);
    integer("max_epochs", r.max_epochs);
    integer("patience", r.patience);
    integer("min_epochs", r.min_epochs);
    real("ipw_cap", r.ipw_cap);
    real("valid_fraction", r.valid_fraction);
    seed("split_seed", r.split_seed);
    r.allow_any_lr = usage_guard("allow_any_lr", [&] { return kv_bool(kv, "allow_any_lr", r.allow_any_lr); });
    if (kv.count("correction")) {
        r.correction = usage_guard("correction", [&] { return parse_correction_mode(kv.at("correction")); });
    }
    if (kv.count("init")) {
        r.init = usage_guard("init", [&] { return parse_lc_init(kv.at("init")); });
    }
    if (kv.count("scheme")) {
        r.scheme = usage_guard("scheme", [&] { return parse_neg_scheme(kv.at("scheme")); });
    }
    integer("n_hard", r.n_hard);
    integer("n_random", r.n_random);
    integer("n_trees", r.gbdt.n_trees);
    integer("max_depth", r.gbdt.max_depth);
    integer("min_leaf_samples", r.gbdt.min_leaf_samples);
    real("gbdt_learning_rate", r.gbdt.learning_rate);
    real("l2_leaf", r.gbdt.l2_leaf);
    if (kv.count("feature_set")) {
        r.gbdt.feature_set = usage_guard("feature_set", [&] { return parse_feature_set(kv.at("feature_set")); });
    }
    real("split_fraction", r.gbdt.split_fraction);
    integer("early_stopping_rounds", r.gbdt.early_stopping_rounds);
    r.gbdt.seed = r.seed;
    return r;
}

KeyValues TrainRecipe::to_key_values() const
{
    KeyValues kv;
    kv["method"] = method;
    kv["seed"] = std::to_string(seed);
    kv["clicks"] = clicks;
    kv["features"] = features;
    kv["judgments"] = judgments;
    kv["docs"] = docs;
    kv["queries"] = queries;
    kv["aux_ckpt"] = aux_ckpt;
    kv["corrected_labels"] = corrected_labels;
    kv["model_score_ckpt"] = model_score_ckpt;
    kv["labels"] = labels;
    kv["lr"] = format_double(lr);
    kv["propensity_lr"] = format_double(propensity_lr);
    kv["weight_decay"] = format_double(weight_decay);
    kv["batch_size"] = std::to_string(batch_size);
    kv["max_epochs"] = std::to_string(max_epochs);
    kv["patience"] = std::to_string(patience);
    kv["min_epochs"] = std::to_string(min_epochs);
    kv["ipw_cap"] = format_double(ipw_cap);
    kv["valid_fraction"] = format_double(valid_fraction);
    kv["split_seed"] = std::to_string(split_seed);
    kv["allow_any_lr"] = allow_any_lr ? "true" : "false";
    kv["correction"] = std::string(to_string(correction));
    kv["init"] = std::string(to_string(init));
    kv["scheme"] = std::string(to_string(scheme));
    kv["n_hard"] = std::to_string(n_hard);
    kv["n_random"] = std::to_string(n_random);
    kv["n_trees"] = std::to_string(gbdt.n_trees);
    kv["max_depth"] = std::to_string(gbdt.max_depth);
    kv["min_leaf_samples"] = std::to_string(gbdt.min_leaf_samples);
    kv["gbdt_learning_rate"] = format_double(gbdt.learning_rate);
    kv["l2_leaf"] = format_double(gbdt.l2_leaf);
    kv["feature_set"] = std::string(to_string(gbdt.feature_set));
    kv["split_fraction"] = format_double(gbdt.split_fraction);
    kv["early_stopping_rounds"] = std::to_string(gbdt.early_stopping_rounds);
    return kv;
}

void TrainRecipe::validate() const
{
    if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
        throw UsageError("unknown method '" + method + "' (expected dla, naive, dla-lc, negsample or gbdt)");
    }
    auto need = [&](const std::string& value, const char* key) {
        if (value.empty()) {
            throw UsageError("method '" + method + "' needs '" + key + "'");
        }
    };
    if (method == "gbdt") {
        need(features, "features");
        if (labels != "graded") {
            throw UsageError("gbdt trains on graded labels only (labels = graded)");
        }
        if (gbdt.feature_set == FeatureSet::base_plus_model_score) {
            need(model_score_ckpt, "model_score_ckpt");
        }
        try {
            gbdt.validate();
        } catch (const DataError& e) {
            throw UsageError(e.what());
        }
        return;
    }
    need(clicks, "clicks");
    need(features, "features");
    need(judgments, "judgments");
    if (method == "dla-lc") {
        need(aux_ckpt, "aux_ckpt");
    }
    if (method == "negsample") {
        need(docs, "docs");
        need(queries, "queries");
        try {
            neg_spec().validate();
        } catch (const DataError& e) {
            throw UsageError(e.what());
        }
    }
    if (!allow_any_lr && !(lr >= kMinLr && lr <= kMaxLr)) {
        throw UsageError("lr " + format_double(lr) + " outside [2e-6, 1e-5]; pass --allow-any-lr to override");
    }
    if (!(lr > 0.0) || !(propensity_lr > 0.0) || weight_decay < 0.0) {
        throw UsageError("learning rates must be > 0 and weight_decay >= 0");
    }
    if (batch_size < 1 || max_epochs < 0 || patience < 1 || min_epochs < 1) {
        throw UsageError("batch_size, patience and min_epochs must be >= 1; max_epochs >= 0");
    }
    if (!(ipw_cap >= 1.0)) {
        throw UsageError("ipw_cap must be >= 1");
    }
    if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
        throw UsageError("valid_fraction must be in (0, 1)");
    }
}

std::string TrainRecipe::run_name() const
{
    auto kv = to_key_values();
    kv.erase("seed");
    return method + "-" + hex64(fnv1a(format_key_values(kv))) + "-seed" + std::to_string(seed);
}

DlaConfig TrainRecipe::dla_config() const
{
    DlaConfig c;
    c.lr = lr;
    c.propensity_lr = propensity_lr;
    c.weight_decay = weight_decay;
    c.batch_size = batch_size;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.min_epochs = min_epochs;
    c.ipw_cap = ipw_cap;
    c.seed = seed;
    c.use_ipw = method != "naive";
    return c;
}

NegSpec TrainRecipe::neg_spec() const
{
    NegSpec s;
    s.scheme = scheme;
    s.n_hard = n_hard;
    s.n_random = n_random;
    s.seed = seed;
    return s;
}

NegTrainConfig TrainRecipe::neg_config() const
{
    NegTrainConfig c;
    c.lr = lr;
    c.weight_decay = weight_decay;
    c.batch_size = batch_size;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.min_epochs = min_epochs;
    c.seed = seed;
    return c;
}

std::filesystem::path resolve(const std::filesystem::path& data_dir, const std::string& path)
{
    std::filesystem::path p(path);
    if (p.is_absolute() || data_dir.empty()) {
        return p;
    }
    return data_dir / p;
}

namespace {

    std::filesystem::path existing(const std::filesystem::path& data_dir, const std::string& path)
    {
        auto p = resolve(data_dir, path);
        if (!std::filesystem::exists(p)) {
            throw Error("missing file '" + p.string() + "'");
        }
        return p;
    }

    // ---- simulate -------------------------------------------------------------------------

    Rankings ideal_run(const Qrels& truth)
    {
        Rankings run;
        for (const auto& [qid, docs]: truth) {
            std::vector<ScoredDoc> scored;
            for (const auto& [doc, grade]: docs) {
                scored.push_back({doc, static_cast<double>(grade)});
            }
            sort_scored(scored);
            run.emplace_back(qid, std::move(scored));
        }
        return run;
    }

    void cmd_simulate(const std::filesystem::path& spec_path, std::optional<std::uint64_t> seed,
                      const std::filesystem::path& out_dir, std::ostream& out)
    {
        KeyValues kv;
        try {
            kv = parse_key_values(read_file(spec_path));
        } catch (const DataError& e) {
            throw UsageError(std::string("sim spec: ") + e.what());
        }
        if (seed) {
            kv["seed"] = std::to_string(*seed);
        }
        SimSpec spec;
        try {
            spec = SimSpec::from_key_values(kv);
        } catch (const DataError& e) {
            throw UsageError(e.what());
        }
        auto corpus = generate_corpus(spec);
        auto logs = simulate_clicks(corpus.lists, corpus.truth, spec.eta, spec.click_noise, spec.seed);
        if (spec.false_negative_min > 0) {
            apply_false_negative_stress(logs, corpus.truth, spec.false_negative_min, spec.seed);
        }
        auto serp = serp_judgments(corpus.lists, corpus.truth);

        std::filesystem::create_directories(out_dir);
        write_documents(out_dir / "docs.jsonl", corpus.docs);
        write_queries(out_dir / "queries.jsonl", corpus.queries);
        write_click_logs(out_dir / "clicks.jsonl", logs);
        write_qrels(out_dir / "truth.qrels", serp);
        write_qrels(out_dir / "pool_truth.qrels", corpus.truth.grades);
        write_run_file(ideal_run(corpus.truth.grades), out_dir / "ideal.run", "ideal");
        write_file_atomic(out_dir / "spec.txt", format_key_values(spec.to_key_values()));
        out << "simulated " << corpus.queries.size() << " queries, " << corpus.docs.size() << " documents into "
            << out_dir.string() << "\n";
    }

    // ---- extract-features -----------------------------------------------------------------

    void cmd_extract(const std::filesystem::path& docs_path, const std::filesystem::path& queries_path,
                     const std::vector<std::filesystem::path>& qrels_paths,
                     const std::optional<std::filesystem::path>& clicks_path,
                     const std::optional<std::filesystem::path>& pairs_path, const std::filesystem::path& out_path,
                     std::ostream& out)
    {
        auto docs = load_documents(docs_path);
        auto queries = load_queries(queries_path);
        std::map<std::string, std::string> text;
        for (const auto& q: queries) {
            text[q.qid] = q.text;
        }
        std::map<std::pair<std::string, std::string>, int> pairs;
        for (const auto& p: qrels_paths) {
            for (const auto& [qid, judged]: load_qrels(p)) {
                for (const auto& [doc, grade]: judged) {
                    auto [it, fresh] = pairs.emplace(std::make_pair(qid, doc), grade);
                    if (!fresh) {
                        it->second = std::max(it->second, grade);
                    }
                }
            }
        }
        if (clicks_path) {
            for (const auto& log: load_click_log(*clicks_path)) {
                for (const auto& d: log.ranked_docs) {
                    pairs.emplace(std::make_pair(log.qid, d), 0);
                }
            }
        }
        if (pairs_path) {
            std::istringstream in(read_file(*pairs_path));
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (!line.empty() && line.back() == '\r') {
                    line.pop_back();
                }
                if (line.empty()) {
                    continue;
                }
                auto tab = line.find('\t');
                if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
                    throw ParseError("expected '<qid>\\t<doc_id>'", line_no, 1);
                }
                pairs.emplace(std::make_pair(line.substr(0, tab), line.substr(tab + 1)), 0);
            }
        }
        auto index = InvertedIndex::build(docs);
        std::vector<FeatureRow> rows;
        rows.reserve(pairs.size());
        for (const auto& [key, grade]: pairs) {
            if (!text.count(key.first)) {
                throw DataError("no query text for '" + key.first + "'");
            }
            FeatureRow r;
            r.label = grade;
            r.qid = key.first;
            r.doc_id = key.second;
            rows.push_back(std::move(r));
        }
        kernels::for_each_index_omp(rows.size(), [&](std::size_t i) {
            rows[i].features = extract_features(text.at(rows[i].qid), rows[i].doc_id, index);
        });
        write_letor(out_path, rows);
        out << "wrote " << rows.size() << " feature rows to " << out_path.string() << "\n";
    }

    // ---- train ----------------------------------------------------------------------------

    struct ClickInputs {
        std::vector<ClickLog> logs;
        FeatureTable features;
        ClickDataset data;
    };

    ClickInputs load_click_inputs(const TrainRecipe& r, const std::filesystem::path& data_dir)
    {
        ClickInputs in;
        in.logs = load_click_log(existing(data_dir, r.clicks));
        in.features = index_features(load_letor(existing(data_dir, r.features)));
        auto qrels = load_qrels(existing(data_dir, r.judgments));
        in.data = build_click_dataset(in.logs, in.features, qrels, r.valid_fraction, r.split_seed);
        if (in.data.train.empty()) {
            throw DataError("no training queries after the validation split");
        }
        return in;
    }

    std::vector<TrainList> apply_corrected_labels(std::vector<TrainList> lists,
                                                  const std::vector<LabeledList>& corrected)
    {
        std::map<std::string, const LabeledList*> by_qid;
        for (const auto& l: corrected) {
            by_qid[l.qid] = &l;
        }
        for (auto& t: lists) {
            auto it = by_qid.find(t.qid);
            if (it == by_qid.end()) {
                throw DataError("no corrected labels for query '" + t.qid + "'");
            }
            if (it->second->doc_ids != t.doc_ids) {
                throw DataError("corrected labels of '" + t.qid + "' list different documents");
            }
            t.labels = it->second->labels;
        }
        return lists;
    }

    void finish_neural(const std::filesystem::path& run_dir, const Checkpoint& ckpt,
                       const std::vector<EpochRecord>& curve, json summary, const std::vector<EvalList>& valid)
    {
        std::vector<json> records;
        for (const auto& e: curve) {
            records.push_back(epoch_record(e));
        }
        summary["valid_dcg@10"] = mean_dcg(ckpt.model, valid);
        summary["valid_queries"] = valid.size();
        if (ckpt.propensity) {
            auto ratios = propensity_ratios(*ckpt.propensity);
            summary["propensity_ratios"] = std::vector<double>(ratios.begin(), ratios.end());
        }
        records.push_back(std::move(summary));
        write_checkpoint(run_dir / "model.ckpt", ckpt);
        write_run_file(score_lists(ckpt.model, valid), run_dir / "valid.run");
        write_file_atomic(run_dir / "metrics.jsonl", jsonl(records));
    }

    json summary_base(const TrainRecipe& r)
    {
        return json{{"type", "summary"}, {"method", r.method}, {"seed", r.seed}};
    }

    void train_neural(const TrainRecipe& r, const std::filesystem::path& data_dir, const std::filesystem::path& run_dir)
    {
        auto in = load_click_inputs(r, data_dir);
        auto cfg = r.dla_config();
        auto summary = summary_base(r);
        summary["train_queries"] = in.data.train.size();
        if (r.method == "dla" || r.method == "naive") {
            auto res = train_dla(in.data.train, in.data.valid, cfg);
            summary["best_epoch"] = res.best_epoch;
            summary["valid_ndcg@10"] = res.best_valid_ndcg;
            finish_neural(run_dir, res.best, res.curve, std::move(summary), in.data.valid);
            return;
        }
        auto aux = read_checkpoint(existing(data_dir, r.aux_ckpt));
        if (!aux.propensity) {
            throw DataError("auxiliary checkpoint has no propensity model");
        }
        DlaResult res;
        if (!r.corrected_labels.empty()) {
            auto lists = apply_corrected_labels(in.data.train,
                                                load_labeled_lists(existing(data_dir, r.corrected_labels)));
            res = train_dla(lists, in.data.valid, cfg, r.init == LcInit::aux ? &aux : nullptr);
        } else {
            res = train_dla_lc(in.data.train, in.data.valid, aux, r.init, r.correction, cfg);
        }
        summary["correction"] = to_string(r.correction);
        summary["init"] = to_string(r.init);
        summary["best_epoch"] = res.best_epoch;
        summary["valid_ndcg@10"] = res.best_valid_ndcg;
        finish_neural(run_dir, res.best, res.curve, std::move(summary), in.data.valid);
    }

    void train_negsample_run(const TrainRecipe& r, const std::filesystem::path& data_dir,
                             const std::filesystem::path& run_dir)
    {
        auto in = load_click_inputs(r, data_dir);
        auto docs = load_documents(existing(data_dir, r.docs));
        auto queries = load_queries(existing(data_dir, r.queries));
        auto index = InvertedIndex::build(docs);
        std::vector<ClickLog> train_logs;
        for (const auto& log: in.logs) {
            if (!in_holdout(log.qid, r.valid_fraction, r.split_seed)) {
                train_logs.push_back(log);
            }
        }
        NegCorpus corpus{&queries, &docs, &index};
        auto res = train_negsample(train_logs, in.data.valid, corpus, r.neg_spec(), r.neg_config());
        auto summary = summary_base(r);
        summary["scheme"] = to_string(r.scheme);
        summary["n_hard"] = r.n_hard;
        summary["n_random"] = r.n_random;
        summary["train_queries"] = res.trained_queries;
        summary["skipped_queries"] = res.skipped_queries;
        summary["best_epoch"] = res.best_epoch;
        summary["valid_ndcg@10"] = res.best_valid_ndcg;
        finish_neural(run_dir, res.best, res.curve, std::move(summary), in.data.valid);
    }

    std::vector<GbdtRow> gbdt_inputs(const std::vector<FeatureRow>& rows, FeatureSet set,
                                     const std::filesystem::path& data_dir, const std::string& model_score_ckpt)
    {
        auto out = gbdt_rows(rows);
        if (set == FeatureSet::base_plus_model_score) {
            out = with_model_score(std::move(out), read_checkpoint(existing(data_dir, model_score_ckpt)).model);
        }
        return out;
    }

    void train_gbdt_run(const TrainRecipe& r, const std::filesystem::path& data_dir, const std::filesystem::path& run_dir)
    {
        auto rows = gbdt_inputs(load_letor(existing(data_dir, r.features)), r.gbdt.feature_set, data_dir,
                                r.model_score_ckpt);
        auto res = train_lambdamart(rows, r.gbdt);

        std::vector<json> records;
        for (const auto& b: res.curve) {
            records.push_back(json{{"type", "tree"},
                                   {"trees", b.trees},
                                   {"train_ndcg@10", b.train_ndcg},
                                   {"valid_ndcg@10", b.valid_ndcg}});
        }
        std::set<std::string> valid_q(res.valid_qids.begin(), res.valid_qids.end());
        std::map<std::string, std::vector<ScoredDoc>> scored;
        for (const auto& row: rows) {
            if (valid_q.count(row.qid)) {
                scored[row.qid].push_back({row.doc_id, res.model.predict(row.features)});
            }
        }
        Rankings run(scored.begin(), scored.end());
        auto summary = summary_base(r);
        summary["feature_set"] = to_string(r.gbdt.feature_set);
        summary["best_iteration"] = res.best_iteration;
        summary["train_queries"] = res.train_qids.size();
        summary["valid_queries"] = res.valid_qids.size();
        summary["valid_ndcg@10"] =
            res.best_iteration > 0 ? res.curve[static_cast<std::size_t>(res.best_iteration) - 1].valid_ndcg : 0.0;
        records.push_back(std::move(summary));

        write_gbdt(run_dir / "model.gbdt", res.model);
        write_run_file(run, run_dir / "valid.run");
        write_file_atomic(run_dir / "metrics.jsonl", jsonl(records));
    }

    void cmd_train(TrainRecipe r, const std::filesystem::path& data_dir, const std::filesystem::path& out_root,
                   const std::filesystem::path& model_copy, std::ostream& out)
    {
        r.validate();
        auto run_dir = out_root / r.run_name();
        std::filesystem::create_directories(run_dir);
        write_file_atomic(run_dir / "recipe.txt", format_key_values(r.to_key_values()));
        if (r.method == "negsample") {
            train_negsample_run(r, data_dir, run_dir);
        } else if (r.method == "gbdt") {
            train_gbdt_run(r, data_dir, run_dir);
        } else {
            train_neural(r, data_dir, run_dir);
        }
        if (!model_copy.empty()) {
            auto model = run_dir / (r.method == "gbdt" ? "model.gbdt" : "model.ckpt");
            write_file_atomic(model_copy, read_file(model));
        }
        out << run_dir.string() << "\n";
    }

    // ---- correct-labels -------------------------------------------------------------------

    void cmd_correct(const std::filesystem::path& clicks_path, const std::filesystem::path& features_path,
                     const std::filesystem::path& aux_path, CorrectionMode mode, const std::filesystem::path& out_path,
                     std::ostream& out)
    {
        auto logs = load_click_log(clicks_path);
        auto features = index_features(load_letor(features_path));
        auto aux = read_checkpoint(aux_path);
        std::vector<LabeledList> lists(logs.size());
        kernels::for_each_index_omp(logs.size(), [&](std::size_t i) {
            const auto& log = logs[i];
            std::vector<double> scores;
            for (const auto& d: log.ranked_docs) {
                auto it = features.find({log.qid, d});
                if (it == features.end()) {
                    throw DataError("no features for (" + log.qid + ", " + d + ")");
                }
                scores.push_back(aux.model.score_raw(it->second));
            }
            lists[i] = correct_labels(log.qid, log.ranked_docs, scores, log.clicks, mode);
        });
        write_labeled_lists(out_path, lists);
        out << "wrote " << lists.size() << " corrected lists to " << out_path.string() << "\n";
    }

    // ---- evaluate -------------------------------------------------------------------------

    Rankings model_run(const std::filesystem::path& model_path, const std::filesystem::path& features_path,
                       const std::filesystem::path& data_dir, const std::string& model_score_ckpt)
    {
        auto text = read_file(model_path);
        auto rows = load_letor(features_path);
        std::map<std::string, std::vector<ScoredDoc>> scored;
        if (text.rfind("ultr-gbdt", 0) == 0) {
            auto model = parse_gbdt(text);
            auto inputs = gbdt_inputs(rows, model.feature_set, data_dir, model_score_ckpt);
            for (const auto& r: inputs) {
                scored[r.qid].push_back({r.doc_id, model.predict(r.features)});
            }
        } else {
            auto ckpt = parse_checkpoint(text);
            for (const auto& r: rows) {
                scored[r.qid].push_back({r.doc_id, ckpt.model.score_raw(r.features)});
            }
        }
        return Rankings(scored.begin(), scored.end());
    }

    std::string evaluation_records(const RunMetrics& m, std::size_t k)
    {
        const std::string nd = "ndcg@" + std::to_string(k);
        const std::string dc = "dcg@" + std::to_string(k);
        std::vector<json> records;
        for (const auto& q: m.per_query) {
            records.push_back(json{{"type", "query"}, {"qid", q.qid}, {nd, q.ndcg}, {dc, q.dcg}});
        }
        records.push_back(json{{"type", "summary"}, {"queries", m.per_query.size()}, {nd, m.mean_ndcg}, {dc, m.mean_dcg}});
        return jsonl(records);
    }

    // ---- report ---------------------------------------------------------------------------

    struct RunRow {
        std::string name;
        KeyValues recipe;
        json summary;
        std::optional<json> evaluation;
    };

    std::optional<json> last_summary(const std::filesystem::path& path)
    {
        std::istringstream in(read_file(path));
        std::string line;
        std::optional<json> found;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            auto rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) {
                throw DataError("malformed record in '" + path.string() + "'");
            }
            if (rec.value("type", "") == "summary") {
                found = rec;
            }
        }
        return found;
    }

    std::vector<RunRow> collect_runs(const std::vector<std::filesystem::path>& roots)
    {
        std::vector<std::filesystem::path> dirs;
        for (const auto& root: roots) {
            if (std::filesystem::exists(root / "metrics.jsonl")) {
                dirs.push_back(root);
                continue;
            }
            if (!std::filesystem::is_directory(root)) {
                throw Error("missing run directory '" + root.string() + "'");
            }
            for (const auto& entry: std::filesystem::directory_iterator(root)) {
                if (entry.is_directory() && std::filesystem::exists(entry.path() / "metrics.jsonl")) {
                    dirs.push_back(entry.path());
                }
            }
        }
        std::sort(dirs.begin(), dirs.end());
        std::vector<RunRow> runs;
        for (const auto& d: dirs) {
            auto summary = last_summary(d / "metrics.jsonl");
            if (!summary) {
                continue;
            }
            RunRow row;
            row.name = d.filename().string();
            if (std::filesystem::exists(d / "recipe.txt")) {
                row.recipe = parse_key_values(read_file(d / "recipe.txt"));
            }
            row.summary = *summary;
            if (std::filesystem::exists(d / "eval.jsonl")) {
                row.evaluation = last_summary(d / "eval.jsonl");
            }
            runs.push_back(std::move(row));
        }
        return runs;
    }

    std::string variant_of(const RunRow& r)
    {
        auto get = [&](const char* k) { return r.recipe.count(k) ? r.recipe.at(k) : std::string(); };
        auto method = get("method");
        if (method == "dla-lc") {
            return get("init") + "/" + get("correction");
        }
        if (method == "negsample") {
            return get("scheme") + " hard=" + get("n_hard") + " random=" + get("n_random");
        }
        if (method == "gbdt") {
            return get("feature_set") == "base" ? "lgbBase" : "lgbAdd";
        }
        return "-";
    }

    std::string fmt(double v)
    {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << v;
        return s.str();
    }

    std::string report_text(const std::vector<RunRow>& runs, bool csv)
    {
        struct Line {
            std::vector<std::string> cells;
        };
        std::vector<std::string> header{"run", "method", "variant", "seed", "best", "valid_ndcg@10", "eval_ndcg@10", "eval_dcg@10"};
        std::vector<Line> lines;
        std::map<std::string, std::map<int, std::vector<double>>> sweeps;
        for (const auto& r: runs) {
            const auto& s = r.summary;
            std::string best = s.contains("best_epoch")       ? std::to_string(s["best_epoch"].get<int>())
                               : s.contains("best_iteration") ? std::to_string(s["best_iteration"].get<int>())
                                                              : "-";
            std::string eval_ndcg = "-";
            std::string eval_dcg = "-";
            if (r.evaluation) {
                for (auto it = r.evaluation->begin(); it != r.evaluation->end(); ++it) {
                    if (it.key().rfind("ndcg@", 0) == 0) {
                        eval_ndcg = fmt(it.value().get<double>());
                    } else if (it.key().rfind("dcg@", 0) == 0) {
                        eval_dcg = fmt(it.value().get<double>());
                    }
                }
            }
            double valid = s.value("valid_ndcg@10", 0.0);
            lines.push_back({{r.name, s.value("method", "?"), variant_of(r), std::to_string(s.value("seed", 0ULL)),
                              best, fmt(valid), eval_ndcg, eval_dcg}});
            if (s.value("method", "") == "negsample") {
                auto key = s.value("scheme", "?") + " random=" + std::to_string(s.value("n_random", 0));
                sweeps[key][s.value("n_hard", 0)].push_back(valid);
            }
        }

        std::ostringstream out;
        if (csv) {
            for (std::size_t c = 0; c < header.size(); ++c) {
                out << (c ? "," : "") << header[c];
            }
            out << "\n";
            for (const auto& l: lines) {
                for (std::size_t c = 0; c < l.cells.size(); ++c) {
                    out << (c ? "," : "") << l.cells[c];
                }
                out << "\n";
            }
            if (!sweeps.empty()) {
                out << "\nsweep,n_hard,mean_valid_ndcg@10,runs\n";
                for (const auto& [key, points]: sweeps) {
                    for (const auto& [n_hard, vals]: points) {
                        double mean = 0.0;
                        for (double v: vals) {
                            mean += v;
                        }
                        out << key << "," << n_hard << "," << fmt(mean / static_cast<double>(vals.size())) << ","
                            << vals.size() << "\n";
                    }
                }
            }
            return out.str();
        }

        std::vector<std::size_t> width(header.size());
        for (std::size_t c = 0; c < header.size(); ++c) {
            width[c] = header[c].size();
            for (const auto& l: lines) {
                width[c] = std::max(width[c], l.cells[c].size());
            }
        }
        auto row = [&](const std::vector<std::string>& cells) {
            for (std::size_t c = 0; c < cells.size(); ++c) {
                out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
            }
            out << "\n";
        };
        row(header);
        for (const auto& l: lines) {
            row(l.cells);
        }
        for (const auto& [key, points]: sweeps) {
            out << "\nvalidation nDCG@10 by n_hard (" << key << ")\n";
            for (const auto& [n_hard, vals]: points) {
                double mean = 0.0;
                for (double v: vals) {
                    mean += v;
                }
                mean /= static_cast<double>(vals.size());
                out << std::right << std::setw(5) << n_hard << "  " << fmt(mean) << "  "
                    << std::string(static_cast<std::size_t>(std::max(0.0, mean) * 40.0), '#') << "\n";
            }
        }
        return out.str();
    }

    std::filesystem::path default_data_dir()
    {
        if (const char* env = std::getenv("ULTR_DATA_DIR"); env && *env) {
            return env;
        }
        return {};
    }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Unbiased learning-to-rank lab", std::string(kTool)};
    app.require_subcommand(1);
    app.fallthrough();

    int threads = 0;
    std::string data_dir_flag;
    app.add_option("--threads", threads, "Worker threads for parallel kernels (0 = OpenMP default)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--data-dir", data_dir_flag, "Base directory for relative data paths (default: $ULTR_DATA_DIR)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus and click log");
    std::string sim_spec;
    std::string sim_out;
    std::optional<std::uint64_t> sim_seed;
    sim->add_option("--spec", sim_spec, "Simulation spec (key = value lines)")->required();
    sim->add_option("--out-dir", sim_out, "Output directory")->required();
    sim->add_option("--seed", sim_seed, "Overrides the spec seed");

    // extract-features
    auto* ext = app.add_subcommand("extract-features", "Compute the 24 matching features per (query, document)");
    std::string ext_docs;
    std::string ext_queries;
    std::vector<std::string> ext_qrels;
    std::string ext_clicks;
    std::string ext_out;
    ext->add_option("--docs", ext_docs, "Documents file")->required();
    ext->add_option("--queries", ext_queries, "Queries file")->required();
    ext->add_option("--qrels", ext_qrels, "Judgments: pairs to extract and their labels");
    ext->add_option("--clicks", ext_clicks, "Click log: adds every displayed pair (label 0 unless judged)");
    std::string ext_pairs;
    ext->add_option("--pairs", ext_pairs, "Tab-separated qid/doc_id pairs (label 0 unless judged)");
    ext->add_option("--out", ext_out, "Output LETOR file")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a ranker: dla | naive | dla-lc | negsample | gbdt");
    std::string method;
    std::string recipe_path;
    std::vector<std::string> sets;
    std::string train_out;
    bool allow_any_lr = false;
    train->add_option("method", method, "Training method (overrides the recipe)");
    train->add_option("--recipe", recipe_path, "Recipe file (key = value lines)");
    train->add_option("--set", sets, "key=value override, repeatable");
    train->add_option("--out-dir", train_out, "Root directory for run directories (default: <data-dir>/runs)");
    train->add_flag("--allow-any-lr", allow_any_lr, "Accept lr outside [2e-6, 1e-5]");
    std::string train_model_out;
    train->add_option("--out", train_model_out, "Also copy the trained model here");
    std::deque<std::pair<std::string, std::string>> named;
    for (const auto& key: TrainRecipe::keys()) {
        if (key == "method" || key == "allow_any_lr") {
            continue;
        }
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (key == "correction") {
            flag += ",--mode";
        }
        named.emplace_back(key, std::string());
        train->add_option(flag, named.back().second, "Recipe key " + key);
    }

    // correct-labels
    auto* cor = app.add_subcommand("correct-labels", "Relabel non-clicked items with an auxiliary checkpoint");
    std::string cor_clicks;
    std::string cor_features;
    std::string cor_aux;
    std::string cor_mode = "sig";
    std::string cor_out;
    cor->add_option("--clicks", cor_clicks, "Click log")->required();
    cor->add_option("--features", cor_features, "LETOR features covering the click lists")->required();
    cor->add_option("--aux-ckpt,--ckpt", cor_aux, "Trained DLA checkpoint")->required();
    cor->add_option("--mode", cor_mode, "sig | min");
    cor->add_option("--out", cor_out, "Output labeled lists")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "nDCG@k and DCG@k of a run (or of a model over a feature file)");
    std::string ev_run;
    std::string ev_model;
    std::string ev_features;
    std::string ev_msc;
    std::string ev_truth;
    std::string ev_out;
    std::string ev_run_out;
    std::size_t ev_k = 10;
    ev->add_option("--run", ev_run, "TREC run file");
    ev->add_option("--model", ev_model, "Checkpoint or GBDT dump to score --features with");
    ev->add_option("--features", ev_features, "LETOR file scored by --model");
    ev->add_option("--model-score-ckpt", ev_msc, "Neural checkpoint feeding an lgbAdd model");
    ev->add_option("--truth", ev_truth, "Graded judgments")->required();
    ev->add_option("--k", ev_k, "Cutoff")->check(CLI::PositiveNumber);
    ev->add_option("--out", ev_out, "Write records here instead of standard output");
    ev->add_option("--run-out", ev_run_out, "Also write the scored run (with --model)");

    // report
    auto* rep = app.add_subcommand("report", "Comparison table and n_hard sweep over run directories");
    std::vector<std::string> rep_runs;
    std::string rep_format = "text";
    std::string rep_out;
    rep->add_option("--runs", rep_runs, "Run directories or directories containing them")->required();
    rep->add_option("--format", rep_format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
    rep->add_option("--out", rep_out, "Write the report here instead of standard output");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << kTool << ": " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        kernels::set_num_threads(threads);
        std::filesystem::path data_dir = data_dir_flag.empty() ? default_data_dir() : std::filesystem::path(data_dir_flag);
        auto path = [&](const std::string& p) { return resolve(data_dir, p); };

        if (sim->parsed()) {
            cmd_simulate(path(sim_spec), sim_seed, path(sim_out), out);
        } else if (ext->parsed()) {
            if (ext_qrels.empty() && ext_clicks.empty() && ext_pairs.empty()) {
                throw UsageError("extract-features needs --qrels, --clicks or --pairs");
            }
            std::vector<std::filesystem::path> qrels;
            for (const auto& q: ext_qrels) {
                qrels.push_back(existing(data_dir, q));
            }
            std::optional<std::filesystem::path> clicks;
            if (!ext_clicks.empty()) {
                clicks = existing(data_dir, ext_clicks);
            }
            std::optional<std::filesystem::path> pairs;
            if (!ext_pairs.empty()) {
                pairs = existing(data_dir, ext_pairs);
            }
            cmd_extract(existing(data_dir, ext_docs), existing(data_dir, ext_queries), qrels, clicks, pairs,
                        path(ext_out), out);
        } else if (train->parsed()) {
            KeyValues kv;
            if (!recipe_path.empty()) {
                try {
                    kv = parse_key_values(read_file(existing(data_dir, recipe_path)));
                } catch (const DataError& e) {
                    throw UsageError(std::string("recipe: ") + e.what());
                }
            }
            for (const auto& s: sets) {
                auto eq = s.find('=');
                if (eq == std::string::npos || eq == 0) {
                    throw UsageError("--set expects key=value, got '" + s + "'");
                }
                kv[s.substr(0, eq)] = s.substr(eq + 1);
            }
            for (const auto& [key, value]: named) {
                if (!value.empty()) {
                    kv[key] = value;
                }
            }
            if (!method.empty()) {
                kv["method"] = method;
            }
            if (allow_any_lr) {
                kv["allow_any_lr"] = "true";
            }
            auto recipe = TrainRecipe::from_key_values(kv);
            std::filesystem::path root = train_out.empty() ? data_dir / "runs" : path(train_out);
            cmd_train(recipe, data_dir, root, train_model_out.empty() ? std::filesystem::path() : path(train_model_out),
                      out);
        } else if (cor->parsed()) {
            CorrectionMode mode;
            try {
                mode = parse_correction_mode(cor_mode);
            } catch (const DataError& e) {
                throw UsageError(e.what());
            }
            cmd_correct(existing(data_dir, cor_clicks), existing(data_dir, cor_features), existing(data_dir, cor_aux),
                        mode, path(cor_out), out);
        } else if (ev->parsed()) {
            if (ev_run.empty() == ev_model.empty()) {
                throw UsageError("evaluate needs exactly one of --run or --model");
            }
            Rankings run;
            if (!ev_run.empty()) {
                run = load_run_file(existing(data_dir, ev_run));
            } else {
                if (ev_features.empty()) {
                    throw UsageError("--model needs --features");
                }
                run = model_run(existing(data_dir, ev_model), existing(data_dir, ev_features), data_dir, ev_msc);
                if (!ev_run_out.empty()) {
                    write_run_file(run, path(ev_run_out));
                }
            }
            auto metrics = evaluate_run(run, load_qrels(existing(data_dir, ev_truth)), ev_k);
            auto text = evaluation_records(metrics, ev_k);
            if (ev_out.empty()) {
                out << text;
            } else {
                write_file_atomic(path(ev_out), text);
                out << "ndcg@" << ev_k << " " << fmt(metrics.mean_ndcg) << "  dcg@" << ev_k << " "
                    << fmt(metrics.mean_dcg) << "  (" << metrics.per_query.size() << " queries)\n";
            }
        } else if (rep->parsed()) {
            std::vector<std::filesystem::path> roots;
            for (const auto& r: rep_runs) {
                roots.push_back(path(r));
            }
            auto text = report_text(collect_runs(roots), rep_format == "csv");
            if (rep_out.empty()) {
                out << text;
            } else {
                write_file_atomic(path(rep_out), text);
            }
        }
    } catch (const UsageError& e) {
        err << kTool << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << kTool << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args, std::cout, std::cerr);
}

}  // namespace ultr::cli
