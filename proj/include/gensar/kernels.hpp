#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Hot inner kernels. Each has a serial reference version (the oracle for
// tests) and an OpenMP version. The parallel versions partition over output
// rows only, so every output element is accumulated in a fixed serial order
// and results are bit-identical to the serial path for any thread count.

namespace gensar::kernels {

// c[m x n] += a[m x k] * b[k x n], all row-major.
template <typename T>
inline void matmul_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                              std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            T aip = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

template <typename T>
inline void matmul_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                           std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        for (std::size_t p = 0; p < k; ++p) {
            T aip = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
#else
    matmul_acc_serial(a, b, c, m, k, n);
#endif
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
inline void matmul_bt_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += static_cast<double>(ai[p]) * static_cast<double>(bj[p]);
            ci[j] += static_cast<T>(acc);
        }
    }
}

template <typename T>
inline void matmul_bt_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                              std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += static_cast<double>(ai[p]) * static_cast<double>(bj[p]);
            ci[j] += static_cast<T>(acc);
        }
    }
#else
    matmul_bt_acc_serial(a, b, c, m, k, n);
#endif
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
inline void matmul_at_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                                 std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        T* cp = c + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            T aip = a[i * k + p];
            const T* bi = b + i * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

template <typename T>
inline void matmul_at_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                              std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(k); ++p) {
        T* cp = c + static_cast<std::size_t>(p) * n;
        for (std::size_t i = 0; i < m; ++i) {
            T aip = a[i * k + static_cast<std::size_t>(p)];
            const T* bi = b + i * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
#else
    matmul_at_acc_serial(a, b, c, m, k, n);
#endif
}

// Nearest code in a K x dim codebook by squared L2 distance. Ties break to
// the lowest index.
template <typename T>
inline std::size_t nearest_code_serial(const T* query, const T* codebook,
                                       std::size_t k, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        const T* e = codebook + c * dim;
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double t = static_cast<double>(query[i]) - static_cast<double>(e[i]);
            acc += t * t;
        }
        if (acc < best_d) {
            best_d = acc;
            best = c;
        }
    }
    return best;
}

// Batch nearest-code assignment, parallel over queries.
template <typename T>
inline void nearest_code_batch_omp(const T* queries, std::size_t n_queries,
                                   const T* codebook, std::size_t k,
                                   std::size_t dim, std::size_t* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t q = 0; q < static_cast<std::int64_t>(n_queries); ++q)
        out[q] = nearest_code_serial(queries + static_cast<std::size_t>(q) * dim,
                                     codebook, k, dim);
#else
    for (std::size_t q = 0; q < n_queries; ++q)
        out[q] = nearest_code_serial(queries + q * dim, codebook, k, dim);
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace gensar::kernels
