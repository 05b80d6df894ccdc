#pragma once

// Dense row-major matrix kernels used by the backbone and reward head.
//
// Two implementations are kept side by side:
//   dph::kernels            OpenMP row-parallel versions used in training.
//   dph::kernels::reference plain serial loops, used by tests and benchmarks.
//
// Every output element of the parallel kernels is produced by exactly one
// thread with a fixed summation order, so results do not depend on the
// number of threads.

#include <cstddef>
#include <span>

namespace dph::kernels {

namespace reference {

/// c[m x n] = a[m x k] * b[k x n]
template <typename T, typename W>
void matmul(std::span<const T> a, std::span<const W> b, std::span<T> c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc{};
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * static_cast<T>(b[static_cast<std::size_t>(p) * n + j]);
            }
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

/// c[m x n] = a[m x k] * b[n x k]^T
template <typename T, typename W>
void matmul_bt(std::span<const T> a, std::span<const W> b, std::span<T> c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc{};
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * static_cast<T>(b[static_cast<std::size_t>(j) * k + p]);
            }
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

/// g[k x n] += a[m x k]^T * b[m x n]
template <typename T, typename G>
void accumulate_at_b(std::span<const T> a, std::span<const T> b, std::span<G> g, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        for (int j = 0; j < n; ++j) {
            G acc{};
            for (int i = 0; i < m; ++i) {
                acc += static_cast<G>(a[static_cast<std::size_t>(i) * k + p]) *
                       static_cast<G>(b[static_cast<std::size_t>(i) * n + j]);
            }
            g[static_cast<std::size_t>(p) * n + j] += acc;
        }
    }
}

}  // namespace reference

/// c[m x n] = a[m x k] * b[k x n]
template <typename T, typename W>
void matmul(std::span<const T> a, std::span<const W> b, std::span<T> c, int m, int k, int n) {
    const T* ap = a.data();
    const W* bp = b.data();
    T* cp = c.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * k * n > 32768)
    for (int i = 0; i < m; ++i) {
        T* row = cp + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            row[j] = T{};
        }
        for (int p = 0; p < k; ++p) {
            const T av = ap[static_cast<std::size_t>(i) * k + p];
            const W* brow = bp + static_cast<std::size_t>(p) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) {
                row[j] += av * static_cast<T>(brow[j]);
            }
        }
    }
}

/// c[m x n] = a[m x k] * b[n x k]^T
template <typename T, typename W>
void matmul_bt(std::span<const T> a, std::span<const W> b, std::span<T> c, int m, int k, int n) {
    const T* ap = a.data();
    const W* bp = b.data();
    T* cp = c.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * k * n > 32768)
    for (int i = 0; i < m; ++i) {
        const T* arow = ap + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const W* brow = bp + static_cast<std::size_t>(j) * k;
            T acc{};
#pragma omp simd reduction(+ : acc)
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * static_cast<T>(brow[p]);
            }
            cp[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

/// g[k x n] += a[m x k]^T * b[m x n]
template <typename T, typename G>
void accumulate_at_b(std::span<const T> a, std::span<const T> b, std::span<G> g, int m, int k, int n) {
    const T* ap = a.data();
    const T* bp = b.data();
    G* gp = g.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * k * n > 32768)
    for (int p = 0; p < k; ++p) {
        G* grow = gp + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const G av = static_cast<G>(ap[static_cast<std::size_t>(i) * k + p]);
            if (av == G{}) {
                continue;
            }
            const T* brow = bp + static_cast<std::size_t>(i) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) {
                grow[j] += av * static_cast<G>(brow[j]);
            }
        }
    }
}

}  // namespace dph::kernels
