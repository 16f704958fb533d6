#include "ultr/labelfix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ultr/kernels.hpp"

namespace ultr {

CorrectionMode parse_correction_mode(std::string_view text)
{
    if (text == "sig") {
        return CorrectionMode::sig;
    }
    if (text == "min") {
        return CorrectionMode::min;
    }
    throw DataError("unknown correction mode '" + std::string(text) + "' (expected sig or min)");
}

std::string_view to_string(CorrectionMode mode) { return mode == CorrectionMode::sig ? "sig" : "min"; }

LcInit parse_lc_init(std::string_view text)
{
    if (text == "scratch") {
        return LcInit::scratch;
    }
    if (text == "aux") {
        return LcInit::aux;
    }
    throw DataError("unknown init '" + std::string(text) + "' (expected scratch or aux)");
}

std::string_view to_string(LcInit init) { return init == LcInit::scratch ? "scratch" : "aux"; }

LabeledList correct_labels(std::string_view qid, std::span<const std::string> doc_ids,
                           std::span<const double> aux_scores, std::span<const std::uint8_t> clicks,
                           CorrectionMode mode)
{
    const std::size_t n = doc_ids.size();
    if (aux_scores.size() != n || clicks.size() != n) {
        throw DataError("correct_labels: size mismatch");
    }
    double min_clicked = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (!std::isfinite(aux_scores[j])) {
            throw DataError("correct_labels: non-finite aux score");
        }
        if (clicks[j]) {
            min_clicked = std::min(min_clicked, aux_scores[j]);
        }
    }
    LabeledList out;
    out.qid = std::string(qid);
    out.doc_ids.assign(doc_ids.begin(), doc_ids.end());
    for (std::size_t j = 0; j < n; ++j) {
        double label = 1.0;
        if (!clicks[j]) {
            if (mode == CorrectionMode::sig) {
                label = 1.0 / (1.0 + std::exp(-aux_scores[j]));
            } else {
                label = aux_scores[j] >= min_clicked ? 1.0 : 0.0;
            }
        }
        out.labels.push_back(label);
        out.propensity_eligible.push_back(clicks[j] ? 1 : 0);
    }
    return out;
}

std::vector<std::vector<double>> aux_judgments(const RankerModel& aux, const std::vector<TrainList>& lists)
{
    std::vector<std::vector<double>> out(lists.size());
    kernels::for_each_index_omp(lists.size(), [&](std::size_t i) {
        for (const auto& f: lists[i].features) {
            out[i].push_back(aux.score_raw(f));
        }
    });
    return out;
}

std::vector<TrainList> relabel(const std::vector<TrainList>& lists, const Checkpoint& aux, CorrectionMode mode)
{
    auto scores = aux_judgments(aux.model, lists);
    std::vector<TrainList> out = lists;
    for (std::size_t i = 0; i < lists.size(); ++i) {
        auto fixed = correct_labels(lists[i].qid, lists[i].doc_ids, scores[i], lists[i].eligible, mode);
        out[i].labels = std::move(fixed.labels);
    }
    return out;
}

DlaResult train_dla_lc(const std::vector<TrainList>& click_lists, const std::vector<EvalList>& valid,
                       const Checkpoint& aux, LcInit init, CorrectionMode mode, const DlaConfig& config)
{
    if (!aux.propensity) {
        throw DataError("auxiliary checkpoint has no propensity model");
    }
    auto lists = relabel(click_lists, aux, mode);
    return train_dla(lists, valid, config, init == LcInit::aux ? &aux : nullptr);
}

}  // namespace ultr
