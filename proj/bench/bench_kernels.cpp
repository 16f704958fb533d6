// Serial reference vs OpenMP for each data-parallel kernel.
//   ./bench_kernels --benchmark_filter=score

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ultr/dla.hpp"
#include "ultr/gbdt.hpp"
#include "ultr/kernels.hpp"
#include "ultr/nnrank.hpp"

using namespace ultr;

namespace {

std::vector<FeatureVector> rows(std::size_t n)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<FeatureVector> out(n);
    for (auto& f: out) {
        for (auto& v: f) {
            v = d(rng);
        }
    }
    return out;
}

template <bool Omp>
void BM_score_rows(benchmark::State& state)
{
    auto params = RankerParams::glorot_uniform(1);
    auto x = rows(static_cast<std::size_t>(state.range(0)));
    std::vector<double> out(x.size());
    for (auto _: state) {
        if constexpr (Omp) {
            kernels::score_rows_omp(params, x, out);
        } else {
            kernels::score_rows_serial(params, x, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Omp>
void BM_dla_gradient(benchmark::State& state)
{
    auto params = RankerParams::glorot_uniform(2);
    std::size_t n_lists = static_cast<std::size_t>(state.range(0));
    auto x = rows(n_lists * kListLength);
    std::vector<double> labels(kListLength, 0.0);
    std::vector<std::uint8_t> eligible(kListLength, 0);
    labels[0] = labels[3] = 1.0;
    eligible[0] = eligible[3] = 1;
    PropensityParams logits{};
    const std::size_t dim = RankerParams::num_params() + kListLength;
    std::vector<double> sum(dim);
    auto item = [&](std::size_t i, std::span<double> slot) {
        std::span<const FeatureVector> list(x.data() + i * kListLength, kListLength);
        dla_list_gradient(params, list, labels, eligible, logits, 10.0, true, slot.first(RankerParams::num_params()),
                          slot.subspan(RankerParams::num_params()));
    };
    for (auto _: state) {
        if constexpr (Omp) {
            kernels::reduce_ordered_omp(n_lists, dim, item, sum);
        } else {
            kernels::reduce_ordered_serial(n_lists, dim, item, sum);
        }
        benchmark::DoNotOptimize(sum.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct Groups {
    QueryGroups groups{{0}};
    std::vector<int> labels;
    std::vector<double> scores;
};

Groups groups(std::size_t n_queries, std::size_t per_query)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 1.0);
    Groups g;
    for (std::size_t q = 0; q < n_queries; ++q) {
        for (std::size_t i = 0; i < per_query; ++i) {
            g.labels.push_back(static_cast<int>(rng() % 5));
            g.scores.push_back(d(rng));
        }
        g.groups.offsets.push_back(g.labels.size());
    }
    return g;
}

template <bool Omp>
void BM_lambdarank_batch(benchmark::State& state)
{
    auto g = groups(static_cast<std::size_t>(state.range(0)), 20);
    std::vector<double> lambdas(g.labels.size());
    std::vector<double> hessians(g.labels.size());
    for (auto _: state) {
        if constexpr (Omp) {
            lambdarank_batch_omp(g.groups, g.scores, g.labels, 10, lambdas, hessians);
        } else {
            lambdarank_batch_serial(g.groups, g.scores, g.labels, 10, lambdas, hessians);
        }
        benchmark::DoNotOptimize(lambdas.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Omp>
void BM_fit_tree(benchmark::State& state)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d(0.0, 1.0);
    std::size_t n = static_cast<std::size_t>(state.range(0));
    FeatureMatrix x{n, kNumFeatures + 1, std::vector<double>(n * (kNumFeatures + 1))};
    for (auto& v: x.values) {
        v = d(rng);
    }
    std::vector<double> g(n);
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = d(rng);
        h[i] = 0.25;
    }
    GbdtParams p;
    for (auto _: state) {
        auto tree = Omp ? fit_tree_omp(x, g, h, p) : fit_tree_serial(x, g, h, p);
        benchmark::DoNotOptimize(tree.nodes.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_score_rows<false>)->Name("score_rows/serial")->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK(BM_score_rows<true>)->Name("score_rows/omp")->Arg(1 << 12)->Arg(1 << 15)->UseRealTime();
BENCHMARK(BM_dla_gradient<false>)->Name("dla_gradient/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_dla_gradient<true>)->Name("dla_gradient/omp")->Arg(64)->Arg(512)->UseRealTime();
BENCHMARK(BM_lambdarank_batch<false>)->Name("lambdarank_batch/serial")->Arg(500)->Arg(4000);
BENCHMARK(BM_lambdarank_batch<true>)->Name("lambdarank_batch/omp")->Arg(500)->Arg(4000)->UseRealTime();
BENCHMARK(BM_fit_tree<false>)->Name("fit_tree/serial")->Arg(5000)->Arg(20000);
BENCHMARK(BM_fit_tree<true>)->Name("fit_tree/omp")->Arg(5000)->Arg(20000)->UseRealTime();

BENCHMARK_MAIN();
