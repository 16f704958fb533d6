#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "ultr/nnrank.hpp"

/// Data-parallel building blocks. Each kernel has a serial reference used by the tests and an
/// OpenMP version used by the trainers; both produce bit-identical results.
namespace ultr::kernels {

/// Caps the worker count of the OpenMP kernels (no-op without OpenMP).
void set_num_threads(int threads);
int max_threads();

/// out[i] = score(params, rows[i]) for already-scaled rows.
void score_rows_serial(const RankerParams& params, std::span<const FeatureVector> rows,
                       std::span<double> out);
void score_rows_omp(const RankerParams& params, std::span<const FeatureVector> rows,
                    std::span<double> out);

/// Calls fn(i) for i in [0, n). Iterations must write disjoint outputs.
void for_each_index_serial(std::size_t n, const std::function<void(std::size_t)>& fn);
void for_each_index_omp(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Per-item gradient with an ordered reduction: fn(i, slot) fills a zeroed slot of size `dim`,
/// and `sum` receives slot_0 + slot_1 + ... added in index order, so the result does not
/// depend on the thread schedule.
void reduce_ordered_serial(std::size_t n, std::size_t dim,
                           const std::function<void(std::size_t, std::span<double>)>& fn,
                           std::span<double> sum);
void reduce_ordered_omp(std::size_t n, std::size_t dim,
                        const std::function<void(std::size_t, std::span<double>)>& fn,
                        std::span<double> sum);

}  // namespace ultr::kernels
