#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ultr/util.hpp"

namespace ultr {

struct Document {
    std::string doc_id;
    std::string title;
    std::string abstract;

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string qid;
    std::string text;

    bool operator==(const Query&) const = default;
};

/// One SERP impression: the ten displayed documents and which of them were clicked.
struct ClickLog {
    std::string qid;
    std::array<std::string, kListLength> ranked_docs;
    std::array<std::uint8_t, kListLength> clicks{};

    int num_clicks() const;
    bool operator==(const ClickLog&) const = default;
};

/// A list with real-valued training labels. `propensity_eligible[i]` is 1 iff item i was
/// originally clicked, so its label carries position-bias information.
struct LabeledList {
    std::string qid;
    std::vector<std::string> doc_ids;
    std::vector<double> labels;
    std::vector<std::uint8_t> propensity_eligible;

    void validate() const;
    bool operator==(const LabeledList&) const = default;
};

using FeatureVector = std::array<double, kNumFeatures>;

struct FeatureRow {
    int label = 0;
    std::string qid;
    FeatureVector features{};
    std::string doc_id;

    bool operator==(const FeatureRow&) const = default;
};

/// Parses `<label> qid:<qid> 1:<v> ... 24:<v> # <doc_id>`.
/// `line_no` is only used in error messages.
FeatureRow parse_letor_line(std::string_view line, std::size_t line_no = 1);
std::string format_letor_line(const FeatureRow& row);

std::vector<FeatureRow> load_letor(const std::filesystem::path& path);
void write_letor(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);

Document parse_document(std::string_view line, std::size_t line_no = 1);
std::string format_document(const Document& doc);
/// Rejects duplicate and empty doc ids.
std::vector<Document> load_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);

Query parse_query(std::string_view line, std::size_t line_no = 1);
std::string format_query(const Query& query);
std::vector<Query> load_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);

ClickLog parse_click_log(std::string_view line, std::size_t line_no = 1);
std::string format_click_log(const ClickLog& log);
/// Validates every record (10 docs, binary clicks, unique qid); preserves file order.
std::vector<ClickLog> load_click_log(const std::filesystem::path& path);
void write_click_logs(const std::filesystem::path& path, const std::vector<ClickLog>& logs);

LabeledList parse_labeled_list(std::string_view line, std::size_t line_no = 1);
std::string format_labeled_list(const LabeledList& list);
std::vector<LabeledList> load_labeled_lists(const std::filesystem::path& path);
void write_labeled_lists(const std::filesystem::path& path, const std::vector<LabeledList>& lists);

/// Graded judgments, TREC qrels layout `<qid> 0 <doc_id> <grade>`.
using Qrels = std::map<std::string, std::map<std::string, int>>;
Qrels load_qrels(const std::filesystem::path& path);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

/// Per-query scored lists in caller order.
using Rankings = std::vector<std::pair<std::string, std::vector<ScoredDoc>>>;

/// Sorts by descending score, ties by ascending doc_id.
void sort_scored(std::vector<ScoredDoc>& docs);

/// TREC run layout: `<qid> Q0 <doc_id> <rank> <score> <tag>`, ranks from 1.
std::string format_run(const Rankings& rankings, std::string_view tag = "ultr");
void write_run_file(const Rankings& rankings, const std::filesystem::path& path,
                    std::string_view tag = "ultr");
/// Reads a run file back into rank order.
Rankings load_run_file(const std::filesystem::path& path);

}  // namespace ultr
