#pragma once

#include <cstddef>
#include <span>

// Dense inner loops behind the tensor operations. Each kernel has a serial
// reference and an OpenMP version that parallelizes over output rows. Both
// accumulate every output element over the reduction index in ascending
// order, so the two produce bit-identical results for any thread count.
namespace syncmask::kernels {

// Minimum m*k*n before the dispatching entry points go parallel.
inline constexpr std::size_t kParallelWork = 1 << 16;

int max_threads();

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n, bool accumulate);
void gemm_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   int m, int k, int n, bool accumulate);

// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    int m, int k, int n, bool accumulate);
void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      int m, int k, int n, bool accumulate);

// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    int m, int k, int n, bool accumulate);
void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      int m, int k, int n, bool accumulate);

// Row-wise softmax with max subtraction. out may alias in.
void softmax_rows_serial(std::span<const double> in, std::span<double> out, int m, int n);
void softmax_rows_parallel(std::span<const double> in, std::span<double> out, int m, int n);

// Dispatchers used by the tensor library.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             int m, int k, int n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             int m, int k, int n, bool accumulate);
void softmax_rows(std::span<const double> in, std::span<double> out, int m, int n);

}  // namespace syncmask::kernels
