#include "ultr/nnrank.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ultr {

RankerParams::RankerParams() : m_data(num_params(), 0.0) {}

std::size_t RankerParams::offset(std::size_t layer)
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) {
        n += kRankerLayers[l].in * kRankerLayers[l].out + kRankerLayers[l].out;
    }
    return n;
}

std::span<double> RankerParams::weights(std::size_t layer)
{
    auto s = kRankerLayers[layer];
    return std::span<double>(m_data).subspan(offset(layer), s.in * s.out);
}

std::span<const double> RankerParams::weights(std::size_t layer) const
{
    auto s = kRankerLayers[layer];
    return std::span<const double>(m_data).subspan(offset(layer), s.in * s.out);
}

std::span<double> RankerParams::bias(std::size_t layer)
{
    auto s = kRankerLayers[layer];
    return std::span<double>(m_data).subspan(offset(layer) + s.in * s.out, s.out);
}

std::span<const double> RankerParams::bias(std::size_t layer) const
{
    auto s = kRankerLayers[layer];
    return std::span<const double>(m_data).subspan(offset(layer) + s.in * s.out, s.out);
}

RankerParams RankerParams::glorot_uniform(std::uint64_t seed)
{
    RankerParams p;
    Rng rng(mix64(seed));
    for (std::size_t l = 0; l < num_layers; ++l) {
        auto s = kRankerLayers[l];
        double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& w: p.weights(l)) {
            w = u(rng);
        }
    }
    return p;
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double forward(const RankerParams& params, std::span<const double> x, Activations* cache)
{
    Activations local;
    Activations& act = cache ? *cache : local;
    std::copy(x.begin(), x.end(), act.values.begin());
    for (std::size_t l = 0; l < RankerParams::num_layers; ++l) {
        auto s = kRankerLayers[l];
        const double* in = act.values.data() + Activations::layer_input(l);
        double* out = act.values.data() + Activations::layer_input(l + 1);
        auto w = params.weights(l);
        auto b = params.bias(l);
        bool hidden = l + 1 < RankerParams::num_layers;
        for (std::size_t j = 0; j < s.out; ++j) {
            double z = b[j];
            const double* row = w.data() + j * s.in;
            for (std::size_t i = 0; i < s.in; ++i) {
                z += row[i] * in[i];
            }
            out[j] = hidden ? elu(z) : z;
        }
    }
    return act.values[Activations::layer_input(RankerParams::num_layers)];
}

double score(const RankerParams& params, std::span<const double> x)
{
    if (x.size() != kNumFeatures) {
        throw DataError("score: expected 24 features");
    }
    for (double v: x) {
        if (!std::isfinite(v)) {
            throw DataError("score: non-finite input feature");
        }
    }
    return forward(params, x, nullptr);
}

void backward(const RankerParams& params, const Activations& cache, double dscore,
              std::span<double> grad)
{
    std::array<double, 64> delta{};
    std::array<double, 64> delta_in{};
    delta[0] = dscore;
    std::size_t offset = RankerParams::num_params();
    for (std::size_t l = RankerParams::num_layers; l-- > 0;) {
        auto s = kRankerLayers[l];
        offset -= s.in * s.out + s.out;
        const double* in = cache.values.data() + Activations::layer_input(l);
        auto w = params.weights(l);
        double* gw = grad.data() + offset;
        double* gb = gw + s.in * s.out;
        std::fill(delta_in.begin(), delta_in.begin() + static_cast<std::ptrdiff_t>(s.in), 0.0);
        for (std::size_t j = 0; j < s.out; ++j) {
            double d = delta[j];
            gb[j] += d;
            const double* row = w.data() + j * s.in;
            double* grow = gw + j * s.in;
            for (std::size_t i = 0; i < s.in; ++i) {
                grow[i] += d * in[i];
                delta_in[i] += d * row[i];
            }
        }
        if (l > 0) {
            // ELU'(z) expressed through its output y: 1 for y > 0, y + 1 otherwise.
            for (std::size_t i = 0; i < s.in; ++i) {
                delta[i] = delta_in[i] * (in[i] > 0.0 ? 1.0 : in[i] + 1.0);
            }
        }
    }
}

std::vector<double> softmax_probs(std::span<const double> scores)
{
    if (scores.empty()) {
        throw DataError("softmax of an empty list");
    }
    double mx = scores[0];
    for (double s: scores) {
        if (!std::isfinite(s)) {
            throw DataError("softmax of a non-finite score");
        }
        mx = std::max(mx, s);
    }
    std::vector<double> p(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - mx);
        total += p[i];
    }
    for (auto& v: p) {
        v /= total;
    }
    return p;
}

double weighted_softmax_xent(std::span<const double> scores, std::span<const double> targets,
                             std::span<double> grad)
{
    if (targets.size() != scores.size() || (!grad.empty() && grad.size() != scores.size())) {
        throw DataError("softmax cross-entropy: size mismatch");
    }
    double total_target = 0.0;
    for (double t: targets) {
        total_target += t;
    }
    if (total_target == 0.0) {
        std::fill(grad.begin(), grad.end(), 0.0);
        return 0.0;
    }
    double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s: scores) {
        z += std::exp(s - mx);
    }
    double log_z = mx + std::log(z);
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (targets[i] != 0.0) {
            loss -= targets[i] * (scores[i] - log_z);
        }
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = total_target * std::exp(scores[i] - log_z) - targets[i];
    }
    return loss;
}

void adamw_update(std::span<double> params, std::span<const double> grads, AdamWState& state)
{
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DataError("adamw: parameter, gradient and state shapes differ");
    }
    const auto& c = state.config;
    ++state.step;
    double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= c.lr * c.weight_decay * params[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        double m_hat = state.m[i] / bc1;
        double v_hat = state.v[i] / bc2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> params, double h)
{
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double orig = theta[i];
        theta[i] = orig + h;
        double up = loss(theta);
        theta[i] = orig - h;
        double down = loss(theta);
        theta[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureVector> rows)
{
    FeatureScaler s;
    if (rows.empty()) {
        return s;
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        double mean = 0.0;
        for (const auto& r: rows) {
            mean += r[f];
        }
        mean /= n;
        double var = 0.0;
        for (const auto& r: rows) {
            var += (r[f] - mean) * (r[f] - mean);
        }
        double sd = std::sqrt(var / n);
        s.mean[f] = mean;
        s.scale[f] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

FeatureVector FeatureScaler::apply(const FeatureVector& raw) const
{
    FeatureVector out;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        out[f] = (raw[f] - mean[f]) / scale[f];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

    constexpr std::string_view kCheckpointMagic = "ultr-checkpoint";
    constexpr int kCheckpointVersion = 1;

    void put_values(std::string& out, std::string_view name, std::span<const double> values)
    {
        out += name;
        out += ' ';
        out += std::to_string(values.size());
        for (double v: values) {
            out += ' ';
            out += format_double(v);
        }
        out += '\n';
    }

    class Reader {
      public:
        explicit Reader(std::string_view text) : m_in(std::string(text)) {}

        std::string word()
        {
            std::string w;
            if (!(m_in >> w)) {
                throw DataError("checkpoint: unexpected end of input");
            }
            return w;
        }

        void expect(std::string_view w)
        {
            auto got = word();
            if (got != w) {
                throw DataError("checkpoint: expected '" + std::string(w) + "', got '" + got + "'");
            }
        }

        std::size_t count()
        {
            auto w = word();
            std::size_t n = 0;
            auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), n);
            if (ec != std::errc{} || ptr != w.data() + w.size()) {
                throw DataError("checkpoint: invalid count '" + w + "'");
            }
            return n;
        }

        void values(std::string_view name, std::span<double> out)
        {
            expect(name);
            if (count() != out.size()) {
                throw DataError("checkpoint: '" + std::string(name) + "' has the wrong length");
            }
            for (auto& v: out) {
                v = parse_double(word());
            }
        }

        bool done()
        {
            m_in >> std::ws;
            return m_in.eof();
        }

      private:
        std::istringstream m_in;
    };

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt)
{
    std::string out = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
    out += "layers " + std::to_string(RankerParams::num_layers);
    for (auto s: kRankerLayers) {
        out += " " + std::to_string(s.in) + "x" + std::to_string(s.out);
    }
    out += "\n";
    put_values(out, "scaler_mean", ckpt.model.scaler.mean);
    put_values(out, "scaler_scale", ckpt.model.scaler.scale);
    for (std::size_t l = 0; l < RankerParams::num_layers; ++l) {
        put_values(out, "weight" + std::to_string(l), ckpt.model.params.weights(l));
        put_values(out, "bias" + std::to_string(l), ckpt.model.params.bias(l));
    }
    if (ckpt.propensity) {
        put_values(out, "propensity", *ckpt.propensity);
    }
    return out;
}

Checkpoint parse_checkpoint(std::string_view text)
{
    Reader r(text);
    r.expect(kCheckpointMagic);
    if (r.count() != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version");
    }
    r.expect("layers");
    if (r.count() != RankerParams::num_layers) {
        throw DataError("checkpoint: layer count mismatch");
    }
    for (auto s: kRankerLayers) {
        r.expect(std::to_string(s.in) + "x" + std::to_string(s.out));
    }
    Checkpoint ckpt;
    r.values("scaler_mean", ckpt.model.scaler.mean);
    r.values("scaler_scale", ckpt.model.scaler.scale);
    for (std::size_t l = 0; l < RankerParams::num_layers; ++l) {
        r.values("weight" + std::to_string(l), ckpt.model.params.weights(l));
        r.values("bias" + std::to_string(l), ckpt.model.params.bias(l));
    }
    if (!r.done()) {
        PropensityLogits g{};
        r.values("propensity", g);
        ckpt.propensity = g;
        if (!r.done()) {
            throw DataError("checkpoint: trailing content");
        }
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    write_file_atomic(path, format_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    return parse_checkpoint(read_file(path));
}

}  // namespace ultr
