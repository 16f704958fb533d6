#include "ultr/kernels.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ultr::kernels {

namespace {

    // Keeps the exception of the lowest failing index so parallel and serial runs report the
    // same error; exceptions must not escape an OpenMP region.
    class FirstError {
      public:
        void capture(std::size_t index)
        {
            std::lock_guard<std::mutex> lock(m_mutex);
            if (!m_error || index < m_index) {
                m_error = std::current_exception();
                m_index = index;
            }
        }
        void rethrow() const
        {
            if (m_error) {
                std::rethrow_exception(m_error);
            }
        }

      private:
        std::mutex m_mutex;
        std::exception_ptr m_error;
        std::size_t m_index = 0;
    };

}  // namespace

void set_num_threads(int threads)
{
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#else
    (void)threads;
#endif
}

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void score_rows_serial(const RankerParams& params, std::span<const FeatureVector> rows,
                       std::span<double> out)
{
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i] = forward(params, rows[i], nullptr);
    }
}

void score_rows_omp(const RankerParams& params, std::span<const FeatureVector> rows,
                    std::span<double> out)
{
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = forward(params, rows[static_cast<std::size_t>(i)], nullptr);
    }
}

void for_each_index_serial(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    for (std::size_t i = 0; i < n; ++i) {
        fn(i);
    }
}

void for_each_index_omp(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    const auto count = static_cast<std::ptrdiff_t>(n);
    FirstError error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            error.capture(static_cast<std::size_t>(i));
        }
    }
    error.rethrow();
}

void reduce_ordered_serial(std::size_t n, std::size_t dim,
                           const std::function<void(std::size_t, std::span<double>)>& fn,
                           std::span<double> sum)
{
    std::fill(sum.begin(), sum.end(), 0.0);
    std::vector<double> slot(dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(slot.begin(), slot.end(), 0.0);
        fn(i, slot);
        for (std::size_t d = 0; d < dim; ++d) {
            sum[d] += slot[d];
        }
    }
}

void reduce_ordered_omp(std::size_t n, std::size_t dim,
                        const std::function<void(std::size_t, std::span<double>)>& fn,
                        std::span<double> sum)
{
    std::vector<double> slots(n * dim, 0.0);
    const auto count = static_cast<std::ptrdiff_t>(n);
    FirstError error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i),
               std::span<double>(slots).subspan(static_cast<std::size_t>(i) * dim, dim));
        } catch (...) {
            error.capture(static_cast<std::size_t>(i));
        }
    }
    error.rethrow();
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* slot = slots.data() + i * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            sum[d] += slot[d];
        }
    }
}

}  // namespace ultr::kernels
