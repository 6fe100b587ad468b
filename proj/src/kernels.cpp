#include "syncmask/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace syncmask::kernels {

namespace {

inline void gemm_row(const double* a, const double* b, double* c, int k, int n, bool accumulate) {
    if (!accumulate) {
        std::fill(c, c + n, 0.0);
    }
    for (int p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) {
            c[j] += av * brow[j];
        }
    }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, int i, int m, int k, int n,
                        bool accumulate) {
    if (!accumulate) {
        std::fill(c, c + n, 0.0);
    }
    for (int p = 0; p < k; ++p) {
        const double av = a[static_cast<std::size_t>(p) * m + i];
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) {
            c[j] += av * brow[j];
        }
    }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, int k, int n, bool accumulate) {
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) {
            acc += a[p] * brow[p];
        }
        c[j] = accumulate ? c[j] + acc : acc;
    }
}

inline void softmax_row(const double* in, double* out, int n) {
    double mx = in[0];
    for (int j = 1; j < n; ++j) {
        mx = std::max(mx, in[j]);
    }
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        total += out[j];
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < n; ++j) {
        out[j] *= inv;
    }
}

bool go_parallel(std::size_t work) {
    return work >= kParallelWork && max_threads() > 1;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void gemm_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        gemm_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                 c.data() + static_cast<std::size_t>(i) * n, k, n, accumulate);
    }
}

void gemm_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        gemm_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                 c.data() + static_cast<std::size_t>(i) * n, k, n, accumulate);
    }
}

void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        gemm_tn_row(a.data(), b.data(), c.data() + static_cast<std::size_t>(i) * n, i, m, k, n,
                    accumulate);
    }
}

void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        gemm_tn_row(a.data(), b.data(), c.data() + static_cast<std::size_t>(i) * n, i, m, k, n,
                    accumulate);
    }
}

void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        gemm_nt_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                    c.data() + static_cast<std::size_t>(i) * n, k, n, accumulate);
    }
}

void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        gemm_nt_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                    c.data() + static_cast<std::size_t>(i) * n, k, n, accumulate);
    }
}

void softmax_rows_serial(std::span<const double> in, std::span<double> out, int m, int n) {
    for (int i = 0; i < m; ++i) {
        softmax_row(in.data() + static_cast<std::size_t>(i) * n,
                    out.data() + static_cast<std::size_t>(i) * n, n);
    }
}

void softmax_rows_parallel(std::span<const double> in, std::span<double> out, int m, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        softmax_row(in.data() + static_cast<std::size_t>(i) * n,
                    out.data() + static_cast<std::size_t>(i) * n, n);
    }
}

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate) {
    const auto work = static_cast<std::size_t>(m) * k * n;
    if (go_parallel(work)) {
        gemm_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_serial(a, b, c, m, k, n, accumulate);
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             int m, int k, int n, bool accumulate) {
    const auto work = static_cast<std::size_t>(m) * k * n;
    if (go_parallel(work)) {
        gemm_tn_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_tn_serial(a, b, c, m, k, n, accumulate);
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             int m, int k, int n, bool accumulate) {
    const auto work = static_cast<std::size_t>(m) * k * n;
    if (go_parallel(work)) {
        gemm_nt_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_nt_serial(a, b, c, m, k, n, accumulate);
    }
}

void softmax_rows(std::span<const double> in, std::span<double> out, int m, int n) {
    if (go_parallel(static_cast<std::size_t>(m) * n * 16)) {
        softmax_rows_parallel(in, out, m, n);
    } else {
        softmax_rows_serial(in, out, m, n);
    }
}

}  // namespace syncmask::kernels
