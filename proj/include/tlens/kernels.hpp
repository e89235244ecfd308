#pragma once
// Double-precision compute kernels used by every hot loop in the project.
//
// Each kernel exists twice: a scalar reference implementation (kern::ref) and,
// on x86-64 with AVX2+FMA, a vectorized variant. The dispatched entry points
// below are bound once at startup from a cpuid probe, so the rest of the code
// never mentions an ISA. The two variants are equivalence-tested against each
// other; results differ only in rounding (FMA contraction), never in shape.

#include <cstddef>

namespace tlens::kern {

enum class Isa { scalar, avx2 };

Isa  active_isa();
void use_scalar();  // pin scalar kernels (tests)
void use_best();    // re-probe cpu and pick the widest supported ISA

// y . x
double dot(const double* a, const double* b, std::size_t n);
// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// y = a * x
void scale_store(double a, const double* x, double* y, std::size_t n);
// x *= a
void scal(double a, double* x, std::size_t n);
// sum x_i^2
double nrm2sq(const double* x, std::size_t n);
// sum |x_i|
double asum(const double* x, std::size_t n);
// m = beta * m + (1 - beta) * x
void ema(double beta, const double* x, double* m, std::size_t n);
// v = beta * v + (1 - beta) * x^2
void ema_sq(double beta, const double* x, double* v, std::size_t n);
// phi = sqrt(v * corr) + eps
void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n);

// C (m x n, leading dim ldc) = A (m x k, lda) * B^T, B stored row-major (n x k, ldb):
//   C[i][j] = dot(A row i, B row j)
// This is the Gram/kernel-row workhorse.
void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);

// C (m x n, ldc) += alpha * A (m x k, lda) * B (k x n, ldb), all row-major.
void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);

namespace ref {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_store(double a, const double* x, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double nrm2sq(const double* x, std::size_t n);
double asum(const double* x, std::size_t n);
void ema(double beta, const double* x, double* m, std::size_t n);
void ema_sq(double beta, const double* x, double* v, std::size_t n);
void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n);
void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);
void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);
}  // namespace ref

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_store(double a, const double* x, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double nrm2sq(const double* x, std::size_t n);
double asum(const double* x, std::size_t n);
void ema(double beta, const double* x, double* m, std::size_t n);
void ema_sq(double beta, const double* x, double* v, std::size_t n);
void phi_from_v(const double* v, double corr, double eps, double* phi, std::size_t n);
void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb,
             double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);
void gemm_nn_acc(double alpha, const double* A, std::size_t lda,
                 const double* B, std::size_t ldb,
                 double* C, std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);
}  // namespace avx2
#endif

}  // namespace tlens::kern
