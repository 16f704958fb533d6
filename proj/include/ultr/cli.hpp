#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ultr/gbdt.hpp"
#include "ultr/labelfix.hpp"
#include "ultr/negsample.hpp"

namespace ultr::cli {

/// Bad command line or recipe; maps to exit code 2.
class UsageError : public Error {
  public:
    using Error::Error;
};

inline constexpr double kMinLr = 2e-6;
inline constexpr double kMaxLr = 1e-5;

/// Everything `train` needs. Precedence, lowest first: defaults, the recipe file, `--set`
/// entries, named flags.
struct TrainRecipe {
    std::string method = "dla";  // dla | naive | dla-lc | negsample | gbdt
    std::uint64_t seed = 0;

    std::string clicks;
    std::string features;
    std::string judgments;
    std::string docs;
    std::string queries;
    std::string aux_ckpt;
    std::string corrected_labels;
    std::string model_score_ckpt;
    std::string labels = "graded";

    double lr = 5e-6;
    double propensity_lr = 1e-2;
    double weight_decay = 0.01;
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 5;
    int min_epochs = 1;
    double ipw_cap = 10.0;
    double valid_fraction = 0.2;
    std::uint64_t split_seed = 7;
    bool allow_any_lr = false;

    CorrectionMode correction = CorrectionMode::sig;
    LcInit init = LcInit::scratch;
    NegScheme scheme = NegScheme::click_only;
    int n_hard = 0;
    int n_random = 0;
    GbdtParams gbdt;

    static const std::vector<std::string>& keys();
    /// Throws UsageError on unknown keys or malformed values.
    static TrainRecipe from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;
    /// Method name, lr range (unless allow_any_lr) and the presence of method-specific inputs.
    void validate() const;

    /// `<method>-<16 hex digits of the recipe hash without the seed>-seed<seed>`.
    std::string run_name() const;

    DlaConfig dla_config() const;
    NegSpec neg_spec() const;
    NegTrainConfig neg_config() const;
};

/// Relative paths resolve against `data_dir`; absolute ones are returned unchanged.
std::filesystem::path resolve(const std::filesystem::path& data_dir, const std::string& path);

/// Entry point of the `ultrlab` tool. Exit codes: 0 ok, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace ultr::cli
