#include "ultr/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ultr {

namespace {

    std::string padded(char prefix, std::size_t index, std::size_t count)
    {
        std::string digits = std::to_string(index);
        std::size_t width = std::max<std::size_t>(6, std::to_string(count).size());
        return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
    }

    std::string word(int id) { return "w" + std::to_string(id); }

    std::string join_words(std::vector<int> const& ids, bool sentence)
    {
        std::string out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i > 0) {
                out += (sentence && i % 9 == 0) ? ", " : " ";
            }
            out += word(ids[i]);
        }
        if (sentence && !ids.empty()) {
            out += '.';
        }
        return out;
    }

    std::vector<double> parse_list(const std::string& s)
    {
        std::vector<double> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(parse_double(item));
        }
        return out;
    }

    int sample_cdf(const std::vector<double>& cdf, Rng& rng)
    {
        double u = std::uniform_real_distribution<double>(0.0, cdf.back())(rng);
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                         static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    }

}  // namespace

void SimSpec::validate() const
{
    if (n_queries < 1 || n_docs < 1 || vocab_size < 1) {
        throw DataError("sim spec: n_queries, n_docs and vocab_size must be >= 1");
    }
    if (list_len != static_cast<int>(kListLength)) {
        throw DataError("sim spec: list_len must be 10");
    }
    if (static_cast<long long>(n_docs) < static_cast<long long>(n_queries) * list_len) {
        throw DataError("sim spec: n_docs must provide at least 10 candidates per query");
    }
    if (max_grade < 1) {
        throw DataError("sim spec: max_grade must be >= 1");
    }
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
        throw DataError("sim spec: eta must be >= 0");
    }
    if (!(click_noise >= 0.0 && click_noise < 1.0)) {
        throw DataError("sim spec: click_noise must be in [0, 1)");
    }
    if (terms_per_query < 1 || terms_per_query > vocab_size) {
        throw DataError("sim spec: terms_per_query must be in [1, vocab_size]");
    }
    if (!(production_noise >= 0.0) || !std::isfinite(production_noise) || !std::isfinite(length_bias)
        || false_negative_min < 0 || !(text_noise >= 0.0) || !std::isfinite(text_noise)) {
        throw DataError("sim spec: invalid production_noise, length_bias, text_noise or false_negative_min");
    }
    if (!(spam_rate >= 0.0 && spam_rate <= 1.0) || !(spam_visibility >= 0.0 && spam_visibility <= 1.0)) {
        throw DataError("sim spec: spam_rate and spam_visibility must be in [0, 1]");
    }
    if (topic_vocab < 0 || (topic_vocab > 0 && topic_vocab < terms_per_query)) {
        throw DataError("sim spec: topic_vocab must be 0 or >= terms_per_query");
    }
    if (!grade_prior.empty()) {
        if (grade_prior.size() != static_cast<std::size_t>(max_grade + 1)) {
            throw DataError("sim spec: grade_prior needs max_grade + 1 entries");
        }
        double total = 0.0;
        for (double p: grade_prior) {
            if (!(p >= 0.0)) {
                throw DataError("sim spec: grade_prior entries must be >= 0");
            }
            total += p;
        }
        if (!(total > 0.0)) {
            throw DataError("sim spec: grade_prior must have positive mass");
        }
    }
}

std::vector<double> SimSpec::prior() const
{
    std::vector<double> p = grade_prior;
    if (p.empty()) {
        for (int g = 0; g <= max_grade; ++g) {
            p.push_back(max_grade + 1 - g);
        }
    }
    double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v: p) {
        v /= total;
    }
    return p;
}

SimSpec SimSpec::from_key_values(const KeyValues& kv)
{
    static const std::vector<std::string> known{
        "n_queries",  "n_docs",          "vocab_size",     "max_grade",   "eta",
        "click_noise", "list_len",       "seed",           "grade_prior", "terms_per_query",
        "production_noise", "length_bias", "false_negative_min", "text_noise",
        "spam_rate", "spam_visibility", "topic_vocab"};
    for (const auto& [k, v]: kv) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw DataError("sim spec: unknown key '" + k + "'");
        }
    }
    SimSpec s;
    s.n_queries = static_cast<int>(kv_int(kv, "n_queries", s.n_queries));
    s.n_docs = static_cast<int>(kv_int(kv, "n_docs", s.n_docs));
    s.vocab_size = static_cast<int>(kv_int(kv, "vocab_size", s.vocab_size));
    s.max_grade = static_cast<int>(kv_int(kv, "max_grade", s.max_grade));
    s.eta = kv_double(kv, "eta", s.eta);
    s.click_noise = kv_double(kv, "click_noise", s.click_noise);
    s.list_len = static_cast<int>(kv_int(kv, "list_len", s.list_len));
    s.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", static_cast<long long>(s.seed)));
    if (kv.count("grade_prior")) {
        s.grade_prior = parse_list(kv.at("grade_prior"));
    }
    s.terms_per_query = static_cast<int>(kv_int(kv, "terms_per_query", s.terms_per_query));
    s.production_noise = kv_double(kv, "production_noise", s.production_noise);
    s.length_bias = kv_double(kv, "length_bias", s.length_bias);
    s.false_negative_min = static_cast<int>(kv_int(kv, "false_negative_min", s.false_negative_min));
    s.text_noise = kv_double(kv, "text_noise", s.text_noise);
    s.spam_rate = kv_double(kv, "spam_rate", s.spam_rate);
    s.spam_visibility = kv_double(kv, "spam_visibility", s.spam_visibility);
    s.topic_vocab = static_cast<int>(kv_int(kv, "topic_vocab", s.topic_vocab));
    s.validate();
    return s;
}

KeyValues SimSpec::to_key_values() const
{
    KeyValues kv;
    kv["n_queries"] = std::to_string(n_queries);
    kv["n_docs"] = std::to_string(n_docs);
    kv["vocab_size"] = std::to_string(vocab_size);
    kv["max_grade"] = std::to_string(max_grade);
    kv["eta"] = format_double(eta);
    kv["click_noise"] = format_double(click_noise);
    kv["list_len"] = std::to_string(list_len);
    kv["seed"] = std::to_string(seed);
    if (!grade_prior.empty()) {
        std::string p;
        for (std::size_t i = 0; i < grade_prior.size(); ++i) {
            p += (i ? "," : "") + format_double(grade_prior[i]);
        }
        kv["grade_prior"] = p;
    }
    kv["terms_per_query"] = std::to_string(terms_per_query);
    kv["production_noise"] = format_double(production_noise);
    kv["length_bias"] = format_double(length_bias);
    kv["false_negative_min"] = std::to_string(false_negative_min);
    kv["text_noise"] = format_double(text_noise);
    kv["spam_rate"] = format_double(spam_rate);
    kv["spam_visibility"] = format_double(spam_visibility);
    kv["topic_vocab"] = std::to_string(topic_vocab);
    return kv;
}

int GroundTruth::grade(const std::string& qid, const std::string& doc_id) const
{
    auto q = grades.find(qid);
    if (q != grades.end()) {
        auto d = q->second.find(doc_id);
        if (d != q->second.end()) {
            return d->second;
        }
    }
    throw DataError("no grade for (" + qid + ", " + doc_id + ")");
}

SimCorpus generate_corpus(const SimSpec& spec)
{
    spec.validate();
    SimCorpus out;
    out.truth.max_grade = spec.max_grade;

    const auto prior = spec.prior();
    std::vector<double> prior_cdf(prior.size());
    std::partial_sum(prior.begin(), prior.end(), prior_cdf.begin());

    // Background words follow a Zipf(1) law over the vocabulary.
    std::vector<double> zipf_cdf(static_cast<std::size_t>(spec.vocab_size));
    double acc = 0.0;
    for (int r = 0; r < spec.vocab_size; ++r) {
        acc += 1.0 / (r + 1.0);
        zipf_cdf[static_cast<std::size_t>(r)] = acc;
    }
    // Query terms avoid the head of the distribution when the vocabulary allows it.
    int topic_lo = spec.vocab_size >= 20 * spec.terms_per_query ? spec.vocab_size / 10 : 0;
    int topic_hi = spec.topic_vocab > 0 ? std::min(spec.vocab_size, topic_lo + spec.topic_vocab) - 1
                                        : spec.vocab_size - 1;

    const auto n_queries = static_cast<std::size_t>(spec.n_queries);
    const auto n_docs = static_cast<std::size_t>(spec.n_docs);
    std::size_t next_doc = 0;
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
        Query query{padded('q', qi, n_queries), {}};
        Rng rng(derive_seed(spec.seed, "corpus:" + query.qid));

        std::vector<int> terms;
        std::uniform_int_distribution<int> topic(topic_lo, topic_hi);
        while (terms.size() < static_cast<std::size_t>(spec.terms_per_query)) {
            int t = topic(rng);
            if (std::find(terms.begin(), terms.end(), t) == terms.end()) {
                terms.push_back(t);
            }
        }
        query.text = join_words(terms, false);

        std::size_t pool = n_docs / n_queries + (qi < n_docs % n_queries ? 1 : 0);
        std::vector<std::pair<double, std::size_t>> production;  // (score, pool position)
        std::vector<std::string> pool_ids;
        auto& judged = out.truth.grades[query.qid];
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t p = 0; p < pool; ++p) {
            Document doc;
            doc.doc_id = padded('d', next_doc++, n_docs);
            int grade = sample_cdf(prior_cdf, rng);
            double length_factor = gauss(rng);
            // The text reflects an apparent grade; text_noise blurs it away from the truth.
            double apparent = std::clamp(grade + spec.text_noise * gauss(rng), 0.0,
                                         static_cast<double>(spec.max_grade));
            double rel = apparent / spec.max_grade;
            // Keyword-stuffed irrelevant documents: query terms pile up in the abstract only.
            bool spam = grade == 0 && spec.spam_rate > 0.0 && std::bernoulli_distribution(spec.spam_rate)(rng);
            if (spam) {
                apparent = spec.max_grade;
                rel = 0.0;
            }

            std::vector<int> title;
            int title_bg = 3 + std::poisson_distribution<int>(3.0)(rng);
            for (int i = 0; i < title_bg; ++i) {
                title.push_back(sample_cdf(zipf_cdf, rng));
            }
            std::vector<int> abstract;
            int abstract_bg = static_cast<int>(std::lround(25.0 * std::exp(0.35 * length_factor)));
            for (int i = 0; i < abstract_bg; ++i) {
                abstract.push_back(sample_cdf(zipf_cdf, rng));
            }
            std::bernoulli_distribution in_title(0.1 + 0.8 * rel);
            std::poisson_distribution<int> abstract_tf(0.3 + 1.2 * apparent);
            for (int t: terms) {
                if (in_title(rng)) {
                    title.push_back(t);
                }
                for (int k = abstract_tf(rng); k > 0; --k) {
                    abstract.push_back(t);
                }
            }
            std::shuffle(title.begin(), title.end(), rng);
            std::shuffle(abstract.begin(), abstract.end(), rng);
            doc.title = join_words(title, false);
            doc.abstract = join_words(abstract, true);

            double seen = spam ? spec.spam_visibility * spec.max_grade : grade;
            double score = seen + spec.length_bias * length_factor + spec.production_noise * gauss(rng);
            production.emplace_back(score, p);
            pool_ids.push_back(doc.doc_id);
            judged[doc.doc_id] = grade;
            out.docs.push_back(std::move(doc));
        }

        std::stable_sort(production.begin(), production.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        RankedList list{query.qid, {}};
        for (std::size_t k = 0; k < kListLength; ++k) {
            list.docs[k] = pool_ids[production[k].second];
        }
        out.lists.push_back(std::move(list));
        out.queries.push_back(std::move(query));
    }
    return out;
}

double examination_probability(int position, double eta)
{
    return std::pow(1.0 / position, eta);
}

double perceived_relevance(int grade, int max_grade, double click_noise)
{
    double gain = (std::pow(2.0, grade) - 1.0) / (std::pow(2.0, max_grade) - 1.0);
    return click_noise + (1.0 - click_noise) * gain;
}

std::vector<ClickLog> simulate_clicks(const std::vector<RankedList>& lists, const GroundTruth& truth,
                                      double eta, double click_noise, std::uint64_t seed)
{
    std::vector<ClickLog> out;
    out.reserve(lists.size());
    for (const auto& list: lists) {
        Rng rng(derive_seed(seed, "clicks:" + list.qid));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ClickLog log;
        log.qid = list.qid;
        log.ranked_docs = list.docs;
        for (std::size_t k = 0; k < kListLength; ++k) {
            int grade = truth.grade(list.qid, list.docs[k]);
            double p = examination_probability(static_cast<int>(k + 1), eta)
                       * perceived_relevance(grade, truth.max_grade, click_noise);
            log.clicks[k] = u(rng) < p ? 1 : 0;
        }
        out.push_back(std::move(log));
    }
    return out;
}

void apply_false_negative_stress(std::vector<ClickLog>& logs, const GroundTruth& truth,
                                 int min_unclicked, std::uint64_t seed)
{
    if (min_unclicked <= 0) {
        return;
    }
    for (auto& log: logs) {
        Rng rng(derive_seed(seed, "stress:" + log.qid));
        int unclicked_relevant = 0;
        std::vector<std::size_t> clicked_relevant;
        for (std::size_t k = 0; k < kListLength; ++k) {
            if (truth.grade(log.qid, log.ranked_docs[k]) >= 2) {
                if (log.clicks[k]) {
                    clicked_relevant.push_back(k);
                } else {
                    ++unclicked_relevant;
                }
            }
        }
        while (unclicked_relevant < min_unclicked && !clicked_relevant.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, clicked_relevant.size() - 1);
            std::size_t i = pick(rng);
            log.clicks[clicked_relevant[i]] = 0;
            clicked_relevant.erase(clicked_relevant.begin() + static_cast<std::ptrdiff_t>(i));
            ++unclicked_relevant;
        }
    }
}

Qrels serp_judgments(const std::vector<RankedList>& lists, const GroundTruth& truth)
{
    Qrels out;
    for (const auto& list: lists) {
        auto& q = out[list.qid];
        for (const auto& d: list.docs) {
            q[d] = truth.grade(list.qid, d);
        }
    }
    return out;
}

}  // namespace ultr
