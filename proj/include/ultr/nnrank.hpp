#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ultr/corpus_io.hpp"

namespace ultr {

struct LayerShape {
    std::size_t in;
    std::size_t out;
};

/// Projection to 64, hidden 32/16/8, scalar output. ELU after every layer but the last.
inline constexpr std::array<LayerShape, 5> kRankerLayers{
    {{kNumFeatures, 64}, {64, 32}, {32, 16}, {16, 8}, {8, 1}}};

/// Weights (row-major, out x in) and biases of every layer, stored in one flat buffer so the
/// optimizer and gradient checks can treat the model as a single vector.
class RankerParams {
  public:
    static constexpr std::size_t num_layers = kRankerLayers.size();

    /// All-zero network.
    RankerParams();

    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static RankerParams glorot_uniform(std::uint64_t seed);

    static constexpr std::size_t num_params()
    {
        std::size_t n = 0;
        for (auto s: kRankerLayers) {
            n += s.in * s.out + s.out;
        }
        return n;
    }

    std::span<double> flat() { return m_data; }
    std::span<const double> flat() const { return m_data; }

    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> bias(std::size_t layer);
    std::span<const double> bias(std::size_t layer) const;

    bool operator==(const RankerParams&) const = default;

  private:
    static std::size_t offset(std::size_t layer);

    std::vector<double> m_data;
};

/// Post-activation values of every layer for one input; kept for the backward pass.
struct Activations {
    static constexpr std::size_t total = [] {
        std::size_t n = kRankerLayers[0].in;
        for (auto s: kRankerLayers) {
            n += s.out;
        }
        return n;
    }();

    std::array<double, total> values{};

    /// values[layer_input(l) ...] is the input of layer l; layer_input(num_layers) is the output.
    static constexpr std::size_t layer_input(std::size_t layer)
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layer; ++l) {
            n += kRankerLayers[l].in;
        }
        return n;
    }
};

double elu(double x);

/// Forward pass. `cache` may be null when no backward pass follows.
double forward(const RankerParams& params, std::span<const double> x, Activations* cache);

/// Scores one (already scaled) feature vector; throws DataError on non-finite input.
double score(const RankerParams& params, std::span<const double> x);

/// Accumulates d(score)/d(params) * `dscore` into `grad` (flat layout of RankerParams).
void backward(const RankerParams& params, const Activations& cache, double dscore,
              std::span<double> grad);

/// Softmax with max-subtraction. Throws DataError on an empty or non-finite input.
std::vector<double> softmax_probs(std::span<const double> scores);

/// Loss = -sum_i targets[i] * log softmax(scores)[i]. Writes d(loss)/d(scores) to `grad` when
/// it is non-empty. Targets must be >= 0; the loss is 0 when they are all 0.
double weighted_softmax_xent(std::span<const double> scores, std::span<const double> targets,
                             std::span<double> grad);

struct AdamWConfig {
    double lr = 5e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    AdamWConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    AdamWState() = default;
    AdamWState(std::size_t n, AdamWConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// Decoupled weight decay (param -= lr * wd * param) followed by a bias-corrected Adam step.
void adamw_update(std::span<double> params, std::span<const double> grads, AdamWState& state);

/// Central differences (L(theta + h e_i) - L(theta - h e_i)) / 2h for every coordinate.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> params, double h = 1e-4);

/// |a - b| / max(|a|, |b|, floor). The floor keeps exact zeros from dividing by zero.
double relative_error(double a, double b, double floor = 1e-6);

/// Per-feature standardization fitted on training rows.
struct FeatureScaler {
    FeatureVector mean{};
    FeatureVector scale{};

    FeatureScaler() { scale.fill(1.0); }
    static FeatureScaler fit(std::span<const FeatureVector> rows);
    FeatureVector apply(const FeatureVector& raw) const;

    bool operator==(const FeatureScaler&) const = default;
};

/// Scaler plus network: scores raw feature vectors.
struct RankerModel {
    FeatureScaler scaler;
    RankerParams params;

    double score_raw(const FeatureVector& raw) const { return score(params, scaler.apply(raw)); }
    bool operator==(const RankerModel&) const = default;
};

using PropensityLogits = std::array<double, kListLength>;

/// What trainers persist: the ranker and, for dual-learning runs, the position logits.
struct Checkpoint {
    RankerModel model;
    std::optional<PropensityLogits> propensity;

    bool operator==(const Checkpoint&) const = default;
};

/// Versioned text dump with a layer-shape header; values round-trip exactly.
std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ultr
