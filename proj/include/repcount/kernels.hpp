#ifndef REPCOUNT_KERNELS_HPP
#define REPCOUNT_KERNELS_HPP

#include <cstdint>

namespace repcount::kernels {

// Dense f64 matrix products, row-major.
//
//   matmul     C[m×n] = A[m×k] · B[k×n]
//   matmul_nt  C[m×n] = A[m×k] · B[n×k]ᵀ
//   matmul_tn  C[m×n] = A[k×m]ᵀ · B[k×n]
//
// The default entry points are OpenMP-parallel and vectorized; the `ref`
// namespace holds plain triple-loop implementations kept for testing and
// as the documented accumulation-order contract. Every output element is
// a k-ascending chain of fused multiply-adds (std::fma in the reference,
// hardware FMA lanes in the tuned tile), written out explicitly so the
// result does not depend on the compiler's -ffp-contract choice. That makes
// results bit-identical across implementations and thread counts
// (see test_kernels.cpp).
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

// C[m×n] = A[m×k] · B[k×n], with each inner product accumulated in
// ascending value order of its partial products. The sorted sequence — and
// therefore the float result — is identical under any simultaneous
// permutation of A's columns and B's rows, which makes consumers invariant
// to the ordering of the contracted dimension, bit for bit. Serial; meant
// for small projections, not bulk linear algebra.
void matmul_sorted(const double* a, const double* b, double* c, int m, int k, int n);

namespace ref {
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
}  // namespace ref

}  // namespace repcount::kernels

#endif
