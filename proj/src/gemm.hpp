#pragma once

#include <algorithm>
#include <cstdint>

// Row-major GEMM kernels used by the convolution paths. Panel-blocked with a
// fixed reduction order per output element: results are bit-identical for any
// worker-thread split (threads only ever partition whole output elements).

namespace tmnet::detail {

inline constexpr std::int64_t kPanelCols = 512;

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const T* __restrict__ A,
             std::int64_t lda, const T* __restrict__ B, std::int64_t ldb, T* __restrict__ C,
             std::int64_t ldc) {
    for (std::int64_t n0 = 0; n0 < N; n0 += kPanelCols) {
        const std::int64_t nb = std::min(kPanelCols, N - n0);
        std::int64_t m = 0;
        for (; m + 4 <= M; m += 4) {
            T* __restrict__ c0 = C + (m + 0) * ldc + n0;
            T* __restrict__ c1 = C + (m + 1) * ldc + n0;
            T* __restrict__ c2 = C + (m + 2) * ldc + n0;
            T* __restrict__ c3 = C + (m + 3) * ldc + n0;
            for (std::int64_t k = 0; k < K; ++k) {
                const T a0 = A[(m + 0) * lda + k];
                const T a1 = A[(m + 1) * lda + k];
                const T a2 = A[(m + 2) * lda + k];
                const T a3 = A[(m + 3) * lda + k];
                const T* __restrict__ b = B + k * ldb + n0;
                for (std::int64_t j = 0; j < nb; ++j) {
                    const T bj = b[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
        }
        for (; m < M; ++m) {
            T* __restrict__ c0 = C + m * ldc + n0;
            for (std::int64_t k = 0; k < K; ++k) {
                const T a0 = A[m * lda + k];
                const T* __restrict__ b = B + k * ldb + n0;
                for (std::int64_t j = 0; j < nb; ++j) c0[j] += a0 * b[j];
            }
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K, const T* __restrict__ A,
             std::int64_t lda, const T* __restrict__ B, std::int64_t ldb, T* __restrict__ C,
             std::int64_t ldc) {
    for (std::int64_t n0 = 0; n0 < N; n0 += kPanelCols) {
        const std::int64_t nb = std::min(kPanelCols, N - n0);
        std::int64_t m = 0;
        for (; m + 4 <= M; m += 4) {
            T* __restrict__ c0 = C + (m + 0) * ldc + n0;
            T* __restrict__ c1 = C + (m + 1) * ldc + n0;
            T* __restrict__ c2 = C + (m + 2) * ldc + n0;
            T* __restrict__ c3 = C + (m + 3) * ldc + n0;
            for (std::int64_t k = 0; k < K; ++k) {
                const T* __restrict__ arow = A + k * lda + m;
                const T a0 = arow[0];
                const T a1 = arow[1];
                const T a2 = arow[2];
                const T a3 = arow[3];
                const T* __restrict__ b = B + k * ldb + n0;
                for (std::int64_t j = 0; j < nb; ++j) {
                    const T bj = b[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
        }
        for (; m < M; ++m) {
            T* __restrict__ c0 = C + m * ldc + n0;
            for (std::int64_t k = 0; k < K; ++k) {
                const T a0 = A[k * lda + m];
                const T* __restrict__ b = B + k * ldb + n0;
                for (std::int64_t j = 0; j < nb; ++j) c0[j] += a0 * b[j];
            }
        }
    }
}

// dst[C,R] = src[R,C]^T, blocked for cache friendliness.
template <typename T>
void transpose_rm(std::int64_t R, std::int64_t C, const T* __restrict__ src, T* __restrict__ dst) {
    constexpr std::int64_t kBlk = 32;
    for (std::int64_t r0 = 0; r0 < R; r0 += kBlk)
        for (std::int64_t c0 = 0; c0 < C; c0 += kBlk) {
            const std::int64_t r1 = std::min(r0 + kBlk, R);
            const std::int64_t c1 = std::min(c0 + kBlk, C);
            for (std::int64_t r = r0; r < r1; ++r)
                for (std::int64_t c = c0; c < c1; ++c) dst[c * R + r] = src[r * C + c];
        }
}

}  // namespace tmnet::detail
