#include "tlens/kernels.hpp"

#include <cmath>

namespace tlens::kern {

namespace ref {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_store(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void scal(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double nrm2sq(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

double asum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::fabs(x[i]);
    return s;
}

void ema(double beta, const double* x, double* m, std::size_t n) {
    const double w = 1.0 - beta;
    for (std::size_t i = 0; i < n; ++i) m[i] = beta * m[i] + w * x[i];
}

void ema_sq(double beta, const double* x, double* v, std::size_t n) {
    const double w = 1.0 - beta;
    for (std::size_t i = 0; i < n; ++i) v[i] = beta * v[i] + w * x[i] * x[i];
}

void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) phi[i] = std::sqrt(v[i] * corr) + eps;
}

void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            C[i * ldc + j] = dot(A + i * lda, B + j * ldb, k);
}

void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = C + i * ldc;
        for (std::size_t l = 0; l < k; ++l) {
            const double a = alpha * A[i * lda + l];
            const double* bl = B + l * ldb;
            for (std::size_t j = 0; j < n; ++j) ci[j] += a * bl[j];
        }
    }
}

}  // namespace ref

namespace {

struct Dispatch {
    Isa isa;
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale_store)(double, const double*, double*, std::size_t);
    void (*scal)(double, double*, std::size_t);
    double (*nrm2sq)(const double*, std::size_t);
    double (*asum)(const double*, std::size_t);
    void (*ema)(double, const double*, double*, std::size_t);
    void (*ema_sq)(double, const double*, double*, std::size_t);
    void (*phi_from_v)(const double*, double, double, double*, std::size_t);
    void (*gemm_nt)(const double*, std::size_t, const double*, std::size_t,
                    double*, std::size_t, std::size_t, std::size_t, std::size_t);
    void (*gemm_nn_acc)(double, const double*, std::size_t, const double*, std::size_t,
                        double*, std::size_t, std::size_t, std::size_t, std::size_t);
};

Dispatch scalar_table() {
    return {Isa::scalar,      ref::dot,    ref::axpy,   ref::scale_store,
            ref::scal,        ref::nrm2sq, ref::asum,   ref::ema,
            ref::ema_sq,      ref::phi_from_v, ref::gemm_nt, ref::gemm_nn_acc};
}

Dispatch best_table() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        return {Isa::avx2,        avx2::dot,    avx2::axpy,   avx2::scale_store,
                avx2::scal,       avx2::nrm2sq, avx2::asum,   avx2::ema,
                avx2::ema_sq,     avx2::phi_from_v, avx2::gemm_nt, avx2::gemm_nn_acc};
    }
#endif
    return scalar_table();
}

Dispatch g_dispatch = best_table();

}  // namespace

Isa active_isa() { return g_dispatch.isa; }
void use_scalar() { g_dispatch = scalar_table(); }
void use_best() { g_dispatch = best_table(); }

double dot(const double* a, const double* b, std::size_t n) { return g_dispatch.dot(a, b, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { g_dispatch.axpy(a, x, y, n); }
void scale_store(double a, const double* x, double* y, std::size_t n) {
    g_dispatch.scale_store(a, x, y, n);
}
void scal(double a, double* x, std::size_t n) { g_dispatch.scal(a, x, n); }
double nrm2sq(const double* x, std::size_t n) { return g_dispatch.nrm2sq(x, n); }
double asum(const double* x, std::size_t n) { return g_dispatch.asum(x, n); }
void ema(double beta, const double* x, double* m, std::size_t n) { g_dispatch.ema(beta, x, m, n); }
void ema_sq(double beta, const double* x, double* v, std::size_t n) { g_dispatch.ema_sq(beta, x, v, n); }
void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n) {
    g_dispatch.phi_from_v(v, corr, eps, phi, n);
}
void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    g_dispatch.gemm_nt(A, lda, B, ldb, C, ldc, m, n, k);
}
void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
    g_dispatch.gemm_nn_acc(alpha, A, lda, B, ldb, C, ldc, m, n, k);
}

}  // namespace tlens::kern
