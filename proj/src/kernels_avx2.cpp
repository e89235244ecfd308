// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; only ever called
// through the dispatch table after the cpuid probe in kernels.cpp.

#include "tlens/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tlens::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_store(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}

void scal(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

double nrm2sq(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d v0 = _mm256_loadu_pd(x + i);
        __m256d v1 = _mm256_loadu_pd(x + i + 4);
        acc0 = _mm256_fmadd_pd(v0, v0, acc0);
        acc1 = _mm256_fmadd_pd(v1, v1, acc1);
    }
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc0 = _mm256_fmadd_pd(v, v, acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

double asum(const double* x, std::size_t n) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_and_pd(mask, _mm256_loadu_pd(x + i)));
    double s = hsum(acc);
    for (; i < n; ++i) s += std::fabs(x[i]);
    return s;
}

void ema(double beta, const double* x, double* m, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(beta);
    const __m256d vw = _mm256_set1_pd(1.0 - beta);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vm = _mm256_mul_pd(vb, _mm256_loadu_pd(m + i));
        _mm256_storeu_pd(m + i, _mm256_fmadd_pd(vw, _mm256_loadu_pd(x + i), vm));
    }
    const double w = 1.0 - beta;
    for (; i < n; ++i) m[i] = beta * m[i] + w * x[i];
}

void ema_sq(double beta, const double* x, double* v, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(beta);
    const __m256d vw = _mm256_set1_pd(1.0 - beta);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vv = _mm256_mul_pd(vb, _mm256_loadu_pd(v + i));
        _mm256_storeu_pd(v + i, _mm256_fmadd_pd(vw, _mm256_mul_pd(vx, vx), vv));
    }
    const double w = 1.0 - beta;
    for (; i < n; ++i) v[i] = beta * v[i] + w * x[i] * x[i];
}

void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(corr);
    const __m256d ve = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d s = _mm256_sqrt_pd(_mm256_mul_pd(vc, _mm256_loadu_pd(v + i)));
        _mm256_storeu_pd(phi + i, _mm256_add_pd(s, ve));
    }
    for (; i < n; ++i) phi[i] = std::sqrt(v[i] * corr) + eps;
}

void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) std::memset(C + i * ldc, 0, n * sizeof(double));

    // k is blocked so the four active B row chunks stay cache-resident while
    // every pair of A rows streams past them.
    constexpr std::size_t KC = 2048;
    for (std::size_t k0 = 0; k0 < k; k0 += KC) {
        const std::size_t kc = std::min(KC, k - k0);
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = B + (j + 0) * ldb + k0;
            const double* b1 = B + (j + 1) * ldb + k0;
            const double* b2 = B + (j + 2) * ldb + k0;
            const double* b3 = B + (j + 3) * ldb + k0;
            std::size_t i = 0;
            for (; i + 2 <= m; i += 2) {
                const double* a0 = A + (i + 0) * lda + k0;
                const double* a1 = A + (i + 1) * lda + k0;
                __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
                __m256d c02 = _mm256_setzero_pd(), c03 = _mm256_setzero_pd();
                __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
                __m256d c12 = _mm256_setzero_pd(), c13 = _mm256_setzero_pd();
                std::size_t t = 0;
                for (; t + 4 <= kc; t += 4) {
                    const __m256d va0 = _mm256_loadu_pd(a0 + t);
                    const __m256d va1 = _mm256_loadu_pd(a1 + t);
                    __m256d vb = _mm256_loadu_pd(b0 + t);
                    c00 = _mm256_fmadd_pd(va0, vb, c00);
                    c10 = _mm256_fmadd_pd(va1, vb, c10);
                    vb = _mm256_loadu_pd(b1 + t);
                    c01 = _mm256_fmadd_pd(va0, vb, c01);
                    c11 = _mm256_fmadd_pd(va1, vb, c11);
                    vb = _mm256_loadu_pd(b2 + t);
                    c02 = _mm256_fmadd_pd(va0, vb, c02);
                    c12 = _mm256_fmadd_pd(va1, vb, c12);
                    vb = _mm256_loadu_pd(b3 + t);
                    c03 = _mm256_fmadd_pd(va0, vb, c03);
                    c13 = _mm256_fmadd_pd(va1, vb, c13);
                }
                double s00 = hsum(c00), s01 = hsum(c01), s02 = hsum(c02), s03 = hsum(c03);
                double s10 = hsum(c10), s11 = hsum(c11), s12 = hsum(c12), s13 = hsum(c13);
                for (; t < kc; ++t) {
                    const double x0 = a0[t], x1 = a1[t];
                    s00 += x0 * b0[t];
                    s01 += x0 * b1[t];
                    s02 += x0 * b2[t];
                    s03 += x0 * b3[t];
                    s10 += x1 * b0[t];
                    s11 += x1 * b1[t];
                    s12 += x1 * b2[t];
                    s13 += x1 * b3[t];
                }
                double* c0 = C + (i + 0) * ldc + j;
                double* c1 = C + (i + 1) * ldc + j;
                c0[0] += s00;
                c0[1] += s01;
                c0[2] += s02;
                c0[3] += s03;
                c1[0] += s10;
                c1[1] += s11;
                c1[2] += s12;
                c1[3] += s13;
            }
            for (; i < m; ++i) {
                const double* a0 = A + i * lda + k0;
                double* c0 = C + i * ldc + j;
                c0[0] += dot(a0, b0, kc);
                c0[1] += dot(a0, b1, kc);
                c0[2] += dot(a0, b2, kc);
                c0[3] += dot(a0, b3, kc);
            }
        }
        for (; j < n; ++j) {
            const double* bj = B + j * ldb + k0;
            for (std::size_t i = 0; i < m; ++i)
                C[i * ldc + j] += dot(A + i * lda + k0, bj, kc);
        }
    }
}

void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        double* c0 = C + (i + 0) * ldc;
        double* c1 = C + (i + 1) * ldc;
        double* c2 = C + (i + 2) * ldc;
        double* c3 = C + (i + 3) * ldc;
        for (std::size_t l = 0; l < k; ++l) {
            const double a0 = alpha * A[(i + 0) * lda + l];
            const double a1 = alpha * A[(i + 1) * lda + l];
            const double a2 = alpha * A[(i + 2) * lda + l];
            const double a3 = alpha * A[(i + 3) * lda + l];
            const double* bl = B + l * ldb;
            const __m256d va0 = _mm256_set1_pd(a0);
            const __m256d va1 = _mm256_set1_pd(a1);
            const __m256d va2 = _mm256_set1_pd(a2);
            const __m256d va3 = _mm256_set1_pd(a3);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                const __m256d vb = _mm256_loadu_pd(bl + j);
                _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(va0, vb, _mm256_loadu_pd(c0 + j)));
                _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(va1, vb, _mm256_loadu_pd(c1 + j)));
                _mm256_storeu_pd(c2 + j, _mm256_fmadd_pd(va2, vb, _mm256_loadu_pd(c2 + j)));
                _mm256_storeu_pd(c3 + j, _mm256_fmadd_pd(va3, vb, _mm256_loadu_pd(c3 + j)));
            }
            for (; j < n; ++j) {
                c0[j] += a0 * bl[j];
                c1[j] += a1 * bl[j];
                c2[j] += a2 * bl[j];
                c3[j] += a3 * bl[j];
            }
        }
    }
    for (; i < m; ++i) {
        double* ci = C + i * ldc;
        for (std::size_t l = 0; l < k; ++l)
            axpy(alpha * A[i * lda + l], B + l * ldb, ci, n);
    }
}

}  // namespace tlens::kern::avx2

#endif  // x86-64
