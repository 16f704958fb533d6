#include "ultr/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ultr {

using nlohmann::json;

namespace {

    struct Token {
        std::string_view text;
        std::size_t column;  // 1-based
    };

    std::vector<Token> split_ws(std::string_view line)
    {
        std::vector<Token> out;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
                ++i;
            }
            std::size_t start = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
                ++i;
            }
            if (i > start) {
                out.push_back({line.substr(start, i - start), start + 1});
            }
        }
        return out;
    }

    template <typename Fn>
    void for_each_line(const std::string& text, Fn&& fn)
    {
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) {
                end = text.size();
            }
            ++line_no;
            std::string_view line(text.data() + pos, end - pos);
            if (!line.empty() && line.back() == '\r') {
                line.remove_suffix(1);
            }
            if (line.find_first_not_of(" \t") != std::string_view::npos) {
                fn(line, line_no);
            }
            pos = end + 1;
        }
    }

    json parse_json_line(std::string_view line, std::size_t line_no)
    {
        try {
            auto j = json::parse(line.begin(), line.end());
            if (!j.is_object()) {
                throw ParseError("expected a JSON object", line_no, 1);
            }
            return j;
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), line_no,
                             e.byte == 0 ? 1 : e.byte);
        }
    }

    const json& require(const json& j, const char* key, std::size_t line_no)
    {
        auto it = j.find(key);
        if (it == j.end()) {
            throw ParseError(std::string("missing field '") + key + "'", line_no, 1);
        }
        return *it;
    }

    std::string require_string(const json& j, const char* key, std::size_t line_no)
    {
        const auto& v = require(j, key, line_no);
        if (!v.is_string()) {
            throw ParseError(std::string("field '") + key + "' must be a string", line_no, 1);
        }
        return v.get<std::string>();
    }

    std::string join_lines(const std::vector<std::string>& lines)
    {
        std::string out;
        for (const auto& l: lines) {
            out += l;
            out += '\n';
        }
        return out;
    }

    template <typename T, typename Fn>
    std::vector<T> load_lines(const std::filesystem::path& path, Fn&& parse)
    {
        std::vector<T> out;
        for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
            out.push_back(parse(line, no));
        });
        return out;
    }

}  // namespace

int ClickLog::num_clicks() const
{
    int n = 0;
    for (auto c: clicks) {
        n += c;
    }
    return n;
}

void LabeledList::validate() const
{
    if (qid.empty()) {
        throw DataError("labeled list with empty qid");
    }
    if (labels.size() != doc_ids.size() || propensity_eligible.size() != doc_ids.size()) {
        throw DataError("labeled list '" + qid + "': field lengths differ");
    }
    for (double l: labels) {
        if (!std::isfinite(l)) {
            throw DataError("labeled list '" + qid + "': non-finite label");
        }
    }
    for (auto e: propensity_eligible) {
        if (e > 1) {
            throw DataError("labeled list '" + qid + "': eligibility flag must be 0 or 1");
        }
    }
}

// ---------------------------------------------------------------------------
// LETOR

FeatureRow parse_letor_line(std::string_view line, std::size_t line_no)
{
    FeatureRow row;
    auto hash = line.find('#');
    std::string_view body = line.substr(0, hash);
    auto tokens = split_ws(body);
    if (tokens.empty()) {
        throw ParseError("invalid label", line_no, 1);
    }

    {
        auto t = tokens[0];
        int label = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), label);
        if (ec != std::errc{} || ptr != t.text.data() + t.text.size() || label < 0) {
            throw ParseError("invalid label", line_no, t.column);
        }
        row.label = label;
    }

    if (tokens.size() < 2 || !tokens[1].text.starts_with("qid:") || tokens[1].text.size() == 4) {
        throw ParseError("invalid qid", line_no, tokens.size() < 2 ? body.size() + 1 : tokens[1].column);
    }
    row.qid = std::string(tokens[1].text.substr(4));

    std::size_t n_features = tokens.size() - 2;
    for (std::size_t i = 0; i < n_features; ++i) {
        const auto& t = tokens[i + 2];
        if (i >= kNumFeatures) {
            throw ParseError("expected 24 features", line_no, t.column);
        }
        auto colon = t.text.find(':');
        if (colon == std::string_view::npos) {
            throw ParseError("malformed feature '" + std::string(t.text) + "'", line_no, t.column);
        }
        std::size_t index = 0;
        auto idx = t.text.substr(0, colon);
        auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), index);
        if (ec != std::errc{} || ptr != idx.data() + idx.size()) {
            throw ParseError("malformed feature index '" + std::string(idx) + "'", line_no,
                             t.column);
        }
        if (index != i + 1) {
            throw ParseError("missing feature index " + std::to_string(i + 1), line_no, t.column);
        }
        auto value_text = t.text.substr(colon + 1);
        double value = 0.0;
        try {
            value = parse_double(value_text);
        } catch (const DataError&) {
            throw ParseError("non-finite or malformed value '" + std::string(value_text) + "'",
                             line_no, t.column + colon + 1);
        }
        row.features[i] = value;
    }
    if (n_features != kNumFeatures) {
        throw ParseError("expected 24 features", line_no, body.size() + 1);
    }

    if (hash == std::string_view::npos) {
        throw ParseError("missing doc_id comment", line_no, line.size() + 1);
    }
    auto comment = split_ws(line.substr(hash + 1));
    if (comment.size() != 1) {
        throw ParseError("expected exactly one doc_id after '#'", line_no, hash + 2);
    }
    row.doc_id = std::string(comment[0].text);
    return row;
}

std::string format_letor_line(const FeatureRow& row)
{
    std::string out = std::to_string(row.label) + " qid:" + row.qid;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        out += ' ';
        out += std::to_string(i + 1);
        out += ':';
        out += format_double(row.features[i]);
    }
    out += " # ";
    out += row.doc_id;
    return out;
}

std::vector<FeatureRow> load_letor(const std::filesystem::path& path)
{
    return load_lines<FeatureRow>(path, [](std::string_view l, std::size_t n) {
        return parse_letor_line(l, n);
    });
}

void write_letor(const std::filesystem::path& path, const std::vector<FeatureRow>& rows)
{
    std::string out;
    for (const auto& r: rows) {
        out += format_letor_line(r);
        out += '\n';
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Documents and queries

Document parse_document(std::string_view line, std::size_t line_no)
{
    auto j = parse_json_line(line, line_no);
    Document d{require_string(j, "doc_id", line_no), require_string(j, "title", line_no),
               require_string(j, "abstract", line_no)};
    if (d.doc_id.empty()) {
        throw ParseError("empty doc_id", line_no, 1);
    }
    return d;
}

std::string format_document(const Document& doc)
{
    json j = json::object();
    j["doc_id"] = doc.doc_id;
    j["title"] = doc.title;
    j["abstract"] = doc.abstract;
    return j.dump();
}

std::vector<Document> load_documents(const std::filesystem::path& path)
{
    std::set<std::string> seen;
    std::vector<Document> out;
    for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
        auto d = parse_document(line, no);
        if (!seen.insert(d.doc_id).second) {
            throw DataError("line " + std::to_string(no) + ": duplicate doc_id '" + d.doc_id + "'");
        }
        out.push_back(std::move(d));
    });
    return out;
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs)
{
    std::vector<std::string> lines;
    lines.reserve(docs.size());
    for (const auto& d: docs) {
        lines.push_back(format_document(d));
    }
    write_file_atomic(path, join_lines(lines));
}

Query parse_query(std::string_view line, std::size_t line_no)
{
    auto j = parse_json_line(line, line_no);
    Query q{require_string(j, "qid", line_no), require_string(j, "text", line_no)};
    if (q.qid.empty()) {
        throw ParseError("empty qid", line_no, 1);
    }
    return q;
}

std::string format_query(const Query& query)
{
    json j = json::object();
    j["qid"] = query.qid;
    j["text"] = query.text;
    return j.dump();
}

std::vector<Query> load_queries(const std::filesystem::path& path)
{
    std::set<std::string> seen;
    std::vector<Query> out;
    for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
        auto q = parse_query(line, no);
        if (!seen.insert(q.qid).second) {
            throw DataError("line " + std::to_string(no) + ": duplicate qid '" + q.qid + "'");
        }
        out.push_back(std::move(q));
    });
    return out;
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries)
{
    std::vector<std::string> lines;
    for (const auto& q: queries) {
        lines.push_back(format_query(q));
    }
    write_file_atomic(path, join_lines(lines));
}

// ---------------------------------------------------------------------------
// Click logs

ClickLog parse_click_log(std::string_view line, std::size_t line_no)
{
    auto j = parse_json_line(line, line_no);
    ClickLog log;
    log.qid = require_string(j, "qid", line_no);
    if (log.qid.empty()) {
        throw ParseError("empty qid", line_no, 1);
    }
    const auto& docs = require(j, "docs", line_no);
    const auto& clicks = require(j, "clicks", line_no);
    if (!docs.is_array() || docs.size() != kListLength) {
        throw DataError("line " + std::to_string(line_no) + ": query '" + log.qid
                        + "' must list exactly 10 docs");
    }
    if (!clicks.is_array() || clicks.size() != kListLength) {
        throw DataError("line " + std::to_string(line_no) + ": query '" + log.qid
                        + "' must have exactly 10 click flags");
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < kListLength; ++i) {
        if (!docs[i].is_string() || docs[i].get<std::string>().empty()) {
            throw DataError("line " + std::to_string(line_no) + ": doc ids must be nonempty strings");
        }
        log.ranked_docs[i] = docs[i].get<std::string>();
        if (!seen.insert(log.ranked_docs[i]).second) {
            throw DataError("line " + std::to_string(line_no) + ": duplicate doc '"
                            + log.ranked_docs[i] + "' in list");
        }
        if (!clicks[i].is_number_integer() || (clicks[i].get<int>() != 0 && clicks[i].get<int>() != 1)) {
            throw DataError("line " + std::to_string(line_no) + ": click flag must be 0 or 1");
        }
        log.clicks[i] = static_cast<std::uint8_t>(clicks[i].get<int>());
    }
    return log;
}

std::string format_click_log(const ClickLog& log)
{
    json j = json::object();
    j["qid"] = log.qid;
    j["docs"] = json(std::vector<std::string>(log.ranked_docs.begin(), log.ranked_docs.end()));
    j["clicks"] = json(std::vector<int>(log.clicks.begin(), log.clicks.end()));
    return j.dump();
}

std::vector<ClickLog> load_click_log(const std::filesystem::path& path)
{
    std::set<std::string> seen;
    std::vector<ClickLog> out;
    for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
        auto log = parse_click_log(line, no);
        if (!seen.insert(log.qid).second) {
            throw DataError("line " + std::to_string(no) + ": duplicate qid '" + log.qid + "'");
        }
        out.push_back(std::move(log));
    });
    return out;
}

void write_click_logs(const std::filesystem::path& path, const std::vector<ClickLog>& logs)
{
    std::vector<std::string> lines;
    for (const auto& l: logs) {
        lines.push_back(format_click_log(l));
    }
    write_file_atomic(path, join_lines(lines));
}

// ---------------------------------------------------------------------------
// Labeled lists

LabeledList parse_labeled_list(std::string_view line, std::size_t line_no)
{
    auto j = parse_json_line(line, line_no);
    LabeledList list;
    list.qid = require_string(j, "qid", line_no);
    try {
        list.doc_ids = require(j, "docs", line_no).get<std::vector<std::string>>();
        list.labels = require(j, "labels", line_no).get<std::vector<double>>();
        list.propensity_eligible = require(j, "eligible", line_no).get<std::vector<std::uint8_t>>();
    } catch (const json::type_error& e) {
        throw ParseError(e.what(), line_no, 1);
    }
    try {
        list.validate();
    } catch (const DataError& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    return list;
}

std::string format_labeled_list(const LabeledList& list)
{
    // Labels are written through format_double so they round-trip exactly.
    std::string out = "{\"qid\":" + json(list.qid).dump() + ",\"docs\":" + json(list.doc_ids).dump()
                      + ",\"labels\":[";
    for (std::size_t i = 0; i < list.labels.size(); ++i) {
        out += (i ? "," : "") + format_double(list.labels[i]);
    }
    out += "],\"eligible\":" + json(std::vector<int>(list.propensity_eligible.begin(),
                                                    list.propensity_eligible.end()))
                                   .dump()
           + "}";
    return out;
}

std::vector<LabeledList> load_labeled_lists(const std::filesystem::path& path)
{
    return load_lines<LabeledList>(path, [](std::string_view l, std::size_t n) {
        return parse_labeled_list(l, n);
    });
}

void write_labeled_lists(const std::filesystem::path& path, const std::vector<LabeledList>& lists)
{
    std::vector<std::string> lines;
    for (const auto& l: lists) {
        lines.push_back(format_labeled_list(l));
    }
    write_file_atomic(path, join_lines(lines));
}

// ---------------------------------------------------------------------------
// Qrels

Qrels load_qrels(const std::filesystem::path& path)
{
    Qrels qrels;
    for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
        auto t = split_ws(line);
        if (t.size() != 4) {
            throw ParseError("expected '<qid> 0 <doc_id> <grade>'", no, 1);
        }
        int grade = 0;
        auto [ptr, ec] = std::from_chars(t[3].text.data(), t[3].text.data() + t[3].text.size(), grade);
        if (ec != std::errc{} || ptr != t[3].text.data() + t[3].text.size() || grade < 0) {
            throw ParseError("invalid grade", no, t[3].column);
        }
        auto& per_query = qrels[std::string(t[0].text)];
        if (!per_query.emplace(std::string(t[2].text), grade).second) {
            throw DataError("line " + std::to_string(no) + ": duplicate judgment");
        }
    });
    return qrels;
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels)
{
    std::string out;
    for (const auto& [qid, docs]: qrels) {
        for (const auto& [doc, grade]: docs) {
            out += qid + " 0 " + doc + " " + std::to_string(grade) + "\n";
        }
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Run files

void sort_scored(std::vector<ScoredDoc>& docs)
{
    std::sort(docs.begin(), docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
}

std::string format_run(const Rankings& rankings, std::string_view tag)
{
    std::string out;
    for (const auto& [qid, docs]: rankings) {
        auto sorted = docs;
        for (const auto& d: sorted) {
            if (!std::isfinite(d.score)) {
                throw DataError("non-finite score for '" + d.doc_id + "' in query '" + qid + "'");
            }
        }
        sort_scored(sorted);
        for (std::size_t r = 0; r < sorted.size(); ++r) {
            out += qid + " Q0 " + sorted[r].doc_id + " " + std::to_string(r + 1) + " "
                   + format_double(sorted[r].score) + " " + std::string(tag) + "\n";
        }
    }
    return out;
}

void write_run_file(const Rankings& rankings, const std::filesystem::path& path, std::string_view tag)
{
    write_file_atomic(path, format_run(rankings, tag));
}

Rankings load_run_file(const std::filesystem::path& path)
{
    Rankings out;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::pair<long, ScoredDoc>>> ranked;
    for_each_line(read_file(path), [&](std::string_view line, std::size_t no) {
        auto t = split_ws(line);
        if (t.size() != 6) {
            throw ParseError("expected '<qid> Q0 <doc_id> <rank> <score> <tag>'", no, 1);
        }
        long rank = 0;
        auto [ptr, ec] = std::from_chars(t[3].text.data(), t[3].text.data() + t[3].text.size(), rank);
        if (ec != std::errc{} || rank < 1) {
            throw ParseError("invalid rank", no, t[3].column);
        }
        double score = 0.0;
        try {
            score = parse_double(t[4].text);
        } catch (const DataError&) {
            throw ParseError("invalid score", no, t[4].column);
        }
        std::string qid(t[0].text);
        auto [it, inserted] = index.emplace(qid, out.size());
        if (inserted) {
            out.emplace_back(qid, std::vector<ScoredDoc>{});
            ranked.emplace_back();
        }
        ranked[it->second].push_back({rank, ScoredDoc{std::string(t[2].text), score}});
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::stable_sort(ranked[i].begin(), ranked[i].end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [rank, doc]: ranked[i]) {
            out[i].second.push_back(std::move(doc));
        }
    }
    return out;
}

}  // namespace ultr
