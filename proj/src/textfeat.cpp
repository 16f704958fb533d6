#include "ultr/textfeat.hpp"

#include <algorithm>
#include <cmath>

namespace ultr {

namespace {

    bool is_separator(char32_t cp)
    {
        if (cp < 0x80) {
            return !((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9'));
        }
        return cp == 0x85 || (cp >= 0xA0 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || cp == 0x1680
               || (cp >= 0x2000 && cp <= 0x206F)   // general punctuation and spaces
               || (cp >= 0x3000 && cp <= 0x303F)   // CJK symbols and punctuation
               || (cp >= 0xFE30 && cp <= 0xFE4F)   // CJK compatibility forms
               || (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20)
               || (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
    }

    char32_t lower(char32_t cp)
    {
        if (cp >= 'A' && cp <= 'Z') {
            return cp + 32;
        }
        if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) {
            return cp + 32;
        }
        return cp;
    }

    void append_utf8(std::string& out, char32_t cp)
    {
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }

    // Decodes one code point; malformed bytes decode as U+FFFD and consume one byte.
    char32_t next_codepoint(std::string_view s, std::size_t& i)
    {
        auto b0 = static_cast<unsigned char>(s[i]);
        int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) {
            ++i;
            return 0xFFFD;
        }
        char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
        for (int k = 1; k < len; ++k) {
            auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ++i;
                return 0xFFFD;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        i += len;
        return cp;
    }

    double term_probability(std::uint32_t tf, std::uint32_t dl, std::uint32_t unique, double p_coll,
                            const SmoothingSpec& s)
    {
        double p = 0.0;
        switch (s.kind) {
        case SmoothingSpec::Kind::jelinek_mercer: {
            double p_ml = dl > 0 ? static_cast<double>(tf) / dl : 0.0;
            p = s.parameter * p_ml + (1.0 - s.parameter) * p_coll;
            break;
        }
        case SmoothingSpec::Kind::dirichlet:
            p = (tf + s.parameter * p_coll) / (dl + s.parameter);
            break;
        case SmoothingSpec::Kind::absolute_discount:
            if (dl == 0) {
                p = p_coll;
            } else {
                p = std::max(tf - s.parameter, 0.0) / dl + s.parameter * unique / dl * p_coll;
            }
            break;
        }
        return std::max(p, kLmFloor);
    }

    double bm25_term(std::uint32_t tf, std::uint32_t df, std::uint32_t dl, double avgdl,
                     std::uint64_t n, double k1, double b)
    {
        if (tf == 0) {
            return 0.0;
        }
        double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
        return bm25_idf(df, n) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }

}  // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = next_codepoint(text, i);
        if (is_separator(cp)) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            append_utf8(current, lower(cp));
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

// ---------------------------------------------------------------------------

SmoothingSpec SmoothingSpec::jelinek_mercer(double lambda)
{
    SmoothingSpec s{Kind::jelinek_mercer, lambda};
    s.validate();
    return s;
}

SmoothingSpec SmoothingSpec::dirichlet(double mu)
{
    SmoothingSpec s{Kind::dirichlet, mu};
    s.validate();
    return s;
}

SmoothingSpec SmoothingSpec::absolute_discount(double delta)
{
    SmoothingSpec s{Kind::absolute_discount, delta};
    s.validate();
    return s;
}

void SmoothingSpec::validate() const
{
    bool ok = std::isfinite(parameter);
    switch (kind) {
    // lambda = 1 is admitted: it is the pure maximum-likelihood model and relies on the floor.
    case Kind::jelinek_mercer: ok = ok && parameter > 0.0 && parameter <= 1.0; break;
    case Kind::dirichlet: ok = ok && parameter > 0.0; break;
    case Kind::absolute_discount: ok = ok && parameter > 0.0 && parameter < 1.0; break;
    }
    if (!ok) {
        throw DataError("smoothing parameter " + format_double(parameter) + " out of range");
    }
}

// ---------------------------------------------------------------------------

InvertedIndex InvertedIndex::build(std::span<const Document> docs)
{
    if (docs.empty()) {
        throw DataError("cannot index an empty corpus");
    }
    InvertedIndex idx;
    idx.m_doc_ids.reserve(docs.size());
    for (auto& f: idx.m_fields) {
        f.doc_terms.resize(docs.size());
        f.doc_lengths.resize(docs.size());
    }

    auto intern = [&idx](const std::string& term) {
        auto [it, inserted] = idx.m_terms.emplace(term, static_cast<std::uint32_t>(idx.m_terms.size()));
        if (inserted) {
            for (auto& f: idx.m_fields) {
                f.postings.emplace_back();
                f.collection_counts.push_back(0);
            }
        }
        return it->second;
    };

    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& doc = docs[d];
        if (!idx.m_doc_lookup.emplace(doc.doc_id, d).second) {
            throw DataError("duplicate doc_id '" + doc.doc_id + "'");
        }
        idx.m_doc_ids.push_back(doc.doc_id);

        auto title = tokenize(doc.title);
        auto abstract = tokenize(doc.abstract);
        std::vector<std::uint32_t> title_ids;
        std::vector<std::uint32_t> abstract_ids;
        for (const auto& t: title) {
            title_ids.push_back(intern(t));
        }
        for (const auto& t: abstract) {
            abstract_ids.push_back(intern(t));
        }
        std::vector<std::uint32_t> combined_ids = title_ids;
        combined_ids.insert(combined_ids.end(), abstract_ids.begin(), abstract_ids.end());

        const std::array<const std::vector<std::uint32_t>*, 3> per_field{&title_ids, &abstract_ids,
                                                                         &combined_ids};
        for (std::size_t f = 0; f < 3; ++f) {
            auto ids = *per_field[f];
            std::sort(ids.begin(), ids.end());
            auto& fd = idx.m_fields[f];
            auto& terms = fd.doc_terms[d];
            for (std::size_t i = 0; i < ids.size();) {
                std::size_t j = i;
                while (j < ids.size() && ids[j] == ids[i]) {
                    ++j;
                }
                terms.emplace_back(ids[i], static_cast<std::uint32_t>(j - i));
                i = j;
            }
            fd.doc_lengths[d] = static_cast<std::uint32_t>(ids.size());
            fd.collection_length += ids.size();
            for (auto [term, tf]: terms) {
                fd.postings[term].push_back({static_cast<std::uint32_t>(d), tf});
                fd.collection_counts[term] += tf;
            }
        }
    }
    return idx;
}

std::optional<std::size_t> InvertedIndex::find_doc(std::string_view doc_id) const
{
    auto it = m_doc_lookup.find(std::string(doc_id));
    if (it == m_doc_lookup.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t InvertedIndex::doc_index(std::string_view doc_id) const
{
    auto d = find_doc(doc_id);
    if (!d) {
        throw DataError("unknown doc_id '" + std::string(doc_id) + "'");
    }
    return *d;
}

std::optional<std::uint32_t> InvertedIndex::term_id(std::string_view term) const
{
    auto it = m_terms.find(std::string(term));
    if (it == m_terms.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const InvertedIndex::Posting> InvertedIndex::postings(Field f, std::uint32_t term) const
{
    return field(f).postings[term];
}

std::uint32_t InvertedIndex::doc_freq(Field f, std::uint32_t term) const
{
    return static_cast<std::uint32_t>(field(f).postings[term].size());
}

std::uint32_t InvertedIndex::term_frequency(Field f, std::size_t doc, std::uint32_t term) const
{
    const auto& terms = field(f).doc_terms[doc];
    auto it = std::lower_bound(terms.begin(), terms.end(), term,
                               [](const auto& entry, std::uint32_t t) { return entry.first < t; });
    return it != terms.end() && it->first == term ? it->second : 0;
}

std::uint32_t InvertedIndex::doc_length(Field f, std::size_t doc) const
{
    return field(f).doc_lengths[doc];
}

std::uint32_t InvertedIndex::unique_terms(Field f, std::size_t doc) const
{
    return static_cast<std::uint32_t>(field(f).doc_terms[doc].size());
}

double InvertedIndex::avg_doc_length(Field f) const
{
    return static_cast<double>(field(f).collection_length) / static_cast<double>(num_docs());
}

std::uint64_t InvertedIndex::collection_count(Field f, std::uint32_t term) const
{
    return field(f).collection_counts[term];
}

std::uint64_t InvertedIndex::collection_length(Field f) const
{
    return field(f).collection_length;
}

// ---------------------------------------------------------------------------

double bm25_idf(std::uint64_t df, std::uint64_t num_docs)
{
    double n = static_cast<double>(num_docs);
    double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_score(std::span<const std::string> terms, std::size_t doc, Field field,
                  const InvertedIndex& index, double k1, double b)
{
    double score = 0.0;
    double avgdl = index.avg_doc_length(field);
    std::uint32_t dl = index.doc_length(field, doc);
    for (const auto& t: terms) {
        auto id = index.term_id(t);
        if (!id) {
            continue;
        }
        score += bm25_term(index.term_frequency(field, doc, *id), index.doc_freq(field, *id), dl,
                           avgdl, index.num_docs(), k1, b);
    }
    return score;
}

double bm25_score(std::span<const std::string> terms, std::string_view doc_id, Field field,
                  const InvertedIndex& index, double k1, double b)
{
    return bm25_score(terms, index.doc_index(doc_id), field, index, k1, b);
}

double lm_score(std::span<const std::string> terms, std::size_t doc, Field field,
                const InvertedIndex& index, const SmoothingSpec& smoothing)
{
    smoothing.validate();
    double collection_length = static_cast<double>(index.collection_length(field));
    std::uint32_t dl = index.doc_length(field, doc);
    std::uint32_t unique = index.unique_terms(field, doc);
    double score = 0.0;
    for (const auto& t: terms) {
        auto id = index.term_id(t);
        if (!id) {
            continue;
        }
        auto cf = index.collection_count(field, *id);
        if (cf == 0) {
            continue;
        }
        double p_coll = static_cast<double>(cf) / collection_length;
        score += std::log(term_probability(index.term_frequency(field, doc, *id), dl, unique, p_coll,
                                           smoothing));
    }
    return score;
}

double lm_score(std::span<const std::string> terms, std::string_view doc_id, Field field,
                const InvertedIndex& index, const SmoothingSpec& smoothing)
{
    return lm_score(terms, index.doc_index(doc_id), field, index, smoothing);
}

const std::array<std::string, kNumFeatures>& feature_names()
{
    static const auto names = [] {
        std::array<std::string, kNumFeatures> out;
        const std::array<const char*, 3> fields{"title", "abstract", "combined"};
        const std::array<const char*, kFeaturesPerField> slots{
            "sum_tf", "sum_tf_norm", "sum_tf_idf", "log_length", "bm25", "lm_jm", "lm_dir", "lm_abs"};
        for (std::size_t f = 0; f < 3; ++f) {
            for (std::size_t s = 0; s < kFeaturesPerField; ++s) {
                out[f * kFeaturesPerField + s] = std::string(fields[f]) + "." + slots[s];
            }
        }
        return out;
    }();
    return names;
}

FeatureVector extract_features(std::span<const std::string> query_terms, std::size_t doc,
                               const InvertedIndex& index)
{
    static const auto jm = SmoothingSpec::jelinek_mercer(0.1);
    static const auto dir = SmoothingSpec::dirichlet(2000.0);
    static const auto abs = SmoothingSpec::absolute_discount(0.7);

    FeatureVector out{};
    for (Field f: kAllFields) {
        std::uint32_t dl = index.doc_length(f, doc);
        double sum_tf = 0.0;
        double sum_tf_idf = 0.0;
        for (const auto& t: query_terms) {
            auto id = index.term_id(t);
            if (!id) {
                continue;
            }
            auto tf = index.term_frequency(f, doc, *id);
            sum_tf += tf;
            if (tf > 0) {
                sum_tf_idf += tf * bm25_idf(index.doc_freq(f, *id), index.num_docs());
            }
        }
        out[feature_index(f, FeatureSlot::sum_tf)] = sum_tf;
        out[feature_index(f, FeatureSlot::sum_tf_norm)] = dl > 0 ? sum_tf / dl : 0.0;
        out[feature_index(f, FeatureSlot::sum_tf_idf)] = sum_tf_idf;
        out[feature_index(f, FeatureSlot::log_length)] = std::log(dl + 1.0);
        out[feature_index(f, FeatureSlot::bm25)] = bm25_score(query_terms, doc, f, index);
        out[feature_index(f, FeatureSlot::lm_jelinek_mercer)] = lm_score(query_terms, doc, f, index, jm);
        out[feature_index(f, FeatureSlot::lm_dirichlet)] = lm_score(query_terms, doc, f, index, dir);
        out[feature_index(f, FeatureSlot::lm_absolute_discount)] =
            lm_score(query_terms, doc, f, index, abs);
    }
    return out;
}

FeatureVector extract_features(std::string_view query_text, std::string_view doc_id,
                               const InvertedIndex& index)
{
    auto terms = tokenize(query_text);
    return extract_features(terms, index.doc_index(doc_id), index);
}

std::vector<std::pair<std::string, double>> retrieve_topk(std::span<const std::string> query_terms,
                                                          const InvertedIndex& index, std::size_t k,
                                                          Field field)
{
    if (k == 0) {
        throw DataError("retrieve_topk requires k >= 1");
    }
    // Term-at-a-time accumulation in query-term order.
    std::vector<double> acc(index.num_docs(), 0.0);
    std::vector<std::uint32_t> touched;
    double avgdl = index.avg_doc_length(field);
    for (const auto& t: query_terms) {
        auto id = index.term_id(t);
        if (!id) {
            continue;
        }
        auto df = index.doc_freq(field, *id);
        for (const auto& p: index.postings(field, *id)) {
            if (acc[p.doc] == 0.0) {
                touched.push_back(p.doc);
            }
            acc[p.doc] += bm25_term(p.tf, df, index.doc_length(field, p.doc), avgdl, index.num_docs(),
                                    kBm25K1, kBm25B);
        }
    }
    std::vector<std::pair<std::string, double>> out;
    out.reserve(touched.size());
    for (auto d: touched) {
        out.emplace_back(index.doc_id(d), acc[d]);
    }
    auto by_score = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (out.size() > k) {
        std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), by_score);
        out.resize(k);
    } else {
        std::sort(out.begin(), out.end(), by_score);
    }
    return out;
}

}  // namespace ultr
