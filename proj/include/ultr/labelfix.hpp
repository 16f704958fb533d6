#pragma once

#include <string_view>
#include <vector>

#include "ultr/dla.hpp"

namespace ultr {

enum class CorrectionMode { sig, min };

CorrectionMode parse_correction_mode(std::string_view text);
std::string_view to_string(CorrectionMode mode);

enum class LcInit { scratch, aux };

LcInit parse_lc_init(std::string_view text);
std::string_view to_string(LcInit init);

/// New labels for one list from the auxiliary model's scores. Clicked items keep label 1 and
/// stay propensity-eligible; non-clicked items get sigmoid(a) (sig) or 1 iff a is at least
/// the smallest clicked aux score (min; 0 when nothing was clicked).
LabeledList correct_labels(std::string_view qid, std::span<const std::string> doc_ids,
                           std::span<const double> aux_scores, std::span<const std::uint8_t> clicks,
                           CorrectionMode mode);

/// Raw aux model outputs for every item of every list.
std::vector<std::vector<double>> aux_judgments(const RankerModel& aux, const std::vector<TrainList>& lists);

/// Replaces each list's labels with the corrected ones; `eligible` keeps the original clicks.
std::vector<TrainList> relabel(const std::vector<TrainList>& lists, const Checkpoint& aux, CorrectionMode mode);

/// DLA retrained on corrected labels. `scratch` re-initializes both models; `aux` continues
/// from the auxiliary checkpoint with fresh optimizer state.
DlaResult train_dla_lc(const std::vector<TrainList>& click_lists, const std::vector<EvalList>& valid,
                       const Checkpoint& aux, LcInit init, CorrectionMode mode, const DlaConfig& config);

}  // namespace ultr
