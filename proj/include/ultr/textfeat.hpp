#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ultr/corpus_io.hpp"

namespace ultr {

/// Lowercases and splits on whitespace and punctuation (ASCII plus the common Unicode
/// punctuation blocks). Non-ASCII letters are kept as-is.
std::vector<std::string> tokenize(std::string_view text);

enum class Field : std::uint8_t { title = 0, abstract = 1, combined = 2 };
inline constexpr std::array<Field, 3> kAllFields{Field::title, Field::abstract, Field::combined};

struct SmoothingSpec {
    enum class Kind : std::uint8_t { jelinek_mercer, dirichlet, absolute_discount };

    Kind kind = Kind::dirichlet;
    double parameter = 2000.0;

    static SmoothingSpec jelinek_mercer(double lambda);
    static SmoothingSpec dirichlet(double mu);
    static SmoothingSpec absolute_discount(double delta);

    /// Throws DataError when the parameter is outside its admissible range.
    void validate() const;
};

/// Log probabilities below exp(log(kLmFloor)) are clamped so every feature stays finite.
inline constexpr double kLmFloor = 1e-12;

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// Per-field postings and length statistics over a fixed document set. Immutable after build.
class InvertedIndex {
  public:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    /// Throws DataError on an empty corpus or a duplicate doc id.
    static InvertedIndex build(std::span<const Document> docs);

    std::size_t num_docs() const { return m_doc_ids.size(); }
    std::optional<std::size_t> find_doc(std::string_view doc_id) const;
    /// Like find_doc but throws DataError for unknown ids.
    std::size_t doc_index(std::string_view doc_id) const;
    const std::string& doc_id(std::size_t doc) const { return m_doc_ids[doc]; }

    std::optional<std::uint32_t> term_id(std::string_view term) const;

    std::span<const Posting> postings(Field f, std::uint32_t term) const;
    std::uint32_t doc_freq(Field f, std::uint32_t term) const;
    std::uint32_t term_frequency(Field f, std::size_t doc, std::uint32_t term) const;
    std::uint32_t doc_length(Field f, std::size_t doc) const;
    std::uint32_t unique_terms(Field f, std::size_t doc) const;
    double avg_doc_length(Field f) const;
    std::uint64_t collection_count(Field f, std::uint32_t term) const;
    std::uint64_t collection_length(Field f) const;

  private:
    struct FieldData {
        std::vector<std::vector<Posting>> postings;                      // by term id
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> doc_terms;  // sorted (term, tf)
        std::vector<std::uint32_t> doc_lengths;
        std::vector<std::uint64_t> collection_counts;                    // by term id
        std::uint64_t collection_length = 0;
    };

    const FieldData& field(Field f) const { return m_fields[static_cast<std::size_t>(f)]; }

    std::vector<std::string> m_doc_ids;
    std::unordered_map<std::string, std::size_t> m_doc_lookup;
    std::unordered_map<std::string, std::uint32_t> m_terms;
    std::array<FieldData, 3> m_fields;
};

/// Robertson-Sparck Jones idf with the +1 inside the log, so it is positive for every df <= N.
double bm25_idf(std::uint64_t df, std::uint64_t num_docs);

/// Okapi BM25 of `terms` (duplicates count once per occurrence) against one document field.
double bm25_score(std::span<const std::string> terms, std::string_view doc_id, Field field,
                  const InvertedIndex& index, double k1 = kBm25K1, double b = kBm25B);
double bm25_score(std::span<const std::string> terms, std::size_t doc, Field field,
                  const InvertedIndex& index, double k1 = kBm25K1, double b = kBm25B);

/// Query log-likelihood under the chosen smoothing. Terms absent from the field's collection
/// are skipped; per-term probabilities are floored at kLmFloor.
double lm_score(std::span<const std::string> terms, std::string_view doc_id, Field field,
                const InvertedIndex& index, const SmoothingSpec& smoothing);
double lm_score(std::span<const std::string> terms, std::size_t doc, Field field,
                const InvertedIndex& index, const SmoothingSpec& smoothing);

/// Position of each feature inside one field's block of eight.
enum class FeatureSlot : std::uint8_t {
    sum_tf = 0,
    sum_tf_norm,
    sum_tf_idf,
    log_length,
    bm25,
    lm_jelinek_mercer,
    lm_dirichlet,
    lm_absolute_discount,
};
inline constexpr std::size_t kFeaturesPerField = 8;

constexpr std::size_t feature_index(Field f, FeatureSlot s)
{
    return static_cast<std::size_t>(f) * kFeaturesPerField + static_cast<std::size_t>(s);
}

/// Human-readable names in feature order, e.g. "title.bm25".
const std::array<std::string, kNumFeatures>& feature_names();

FeatureVector extract_features(std::span<const std::string> query_terms, std::size_t doc,
                               const InvertedIndex& index);
FeatureVector extract_features(std::string_view query_text, std::string_view doc_id,
                               const InvertedIndex& index);

/// Top-k documents by BM25 over `field`, descending, ties by doc id. Documents matching no
/// query term are never returned.
std::vector<std::pair<std::string, double>> retrieve_topk(std::span<const std::string> query_terms,
                                                          const InvertedIndex& index, std::size_t k,
                                                          Field field = Field::combined);

}  // namespace ultr
