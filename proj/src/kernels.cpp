#include "repcount/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "repcount/threads.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace repcount::kernels {

namespace ref {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const double* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) s = std::fma(ai[p], *bp, s);
      ci[j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s = std::fma(ai[p], bj[p], s);
      ci[j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* ap = a + i;
      const double* bp = b + j;
      double s = 0.0;
      for (int p = 0; p < k; ++p, ap += m, bp += n) s = std::fma(*ap, *bp, s);
      ci[j] = s;
    }
  }
}

}  // namespace ref

namespace {

// Core register tile: 8 rows × 16 columns of C, streaming k through a
// packed column panel of B. Each C element accumulates k-ascending in a
// single lane via fused multiply-adds — the same chain ref::matmul writes
// with std::fma — which is what makes the result bit-equal to the reference.
#if defined(__AVX512F__)

inline void tile8x16(const double* const* ar, const double* panel, int k, double* const* cr, int j) {
  __m512d acc[8][2];
  for (int r = 0; r < 8; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  const double* bp = panel;
  for (int p = 0; p < k; ++p, bp += 16) {
    const __m512d b0 = _mm512_loadu_pd(bp);
    const __m512d b1 = _mm512_loadu_pd(bp + 8);
    for (int r = 0; r < 8; ++r) {
      const __m512d va = _mm512_set1_pd(ar[r][p]);
      acc[r][0] = _mm512_fmadd_pd(va, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(va, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < 8; ++r) {
    _mm512_storeu_pd(cr[r] + j, acc[r][0]);
    _mm512_storeu_pd(cr[r] + j + 8, acc[r][1]);
  }
}

#else

inline void tile8x16(const double* const* ar, const double* panel, int k, double* const* cr, int j) {
  double acc[8][16];
  for (int r = 0; r < 8; ++r)
    for (int q = 0; q < 16; ++q) acc[r][q] = 0.0;
  const double* bp = panel;
  for (int p = 0; p < k; ++p, bp += 16) {
    for (int r = 0; r < 8; ++r) {
      const double av = ar[r][p];
      for (int q = 0; q < 16; ++q) acc[r][q] = std::fma(av, bp[q], acc[r][q]);
    }
  }
  for (int r = 0; r < 8; ++r)
    for (int q = 0; q < 16; ++q) cr[r][j + q] = acc[r][q];
}

#endif

// B repacked strip-major: strip s holds columns [16s, 16s+16) contiguously,
// k-major. One serial pass; pure data movement, no arithmetic.
void pack_strips(const double* b, int k, int n, int nstrips, std::vector<double>& out) {
  out.resize(static_cast<size_t>(nstrips) * k * 16);
  for (int s = 0; s < nstrips; ++s) {
    double* dst = out.data() + static_cast<size_t>(s) * k * 16;
    const double* src = b + static_cast<size_t>(s) * 16;
    for (int p = 0; p < k; ++p, src += n, dst += 16)
      std::memcpy(dst, src, 16 * sizeof(double));
  }
}

void matmul_packed(const double* a, const double* b, double* c, int m, int k, int n) {
  const int nstrips = n / 16;
  const int ncov = nstrips * 16;
  const int mblocks = m / 8;
  const int mcov = mblocks * 8;

  // thread_local so concurrent callers (outer batch/cell parallelism) keep
  // private scratch; the worker threads below must go through the hoisted
  // pointer, not the thread_local itself
  static thread_local std::vector<double> packed;
  pack_strips(b, k, n, nstrips, packed);
  const double* panel_base = packed.data();

  const int nt = repcount::thread_count();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt)
  for (int ib = 0; ib < mblocks; ++ib) {
    for (int s = 0; s < nstrips; ++s) {
      const double* ar[8];
      double* cr[8];
      for (int r = 0; r < 8; ++r) {
        ar[r] = a + static_cast<size_t>(ib * 8 + r) * k;
        cr[r] = c + static_cast<size_t>(ib * 8 + r) * n;
      }
      tile8x16(ar, panel_base + static_cast<size_t>(s) * k * 16, k, cr, s * 16);
    }
  }

  if (ncov < n) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int i = 0; i < mcov; ++i) {
      const double* ai = a + static_cast<size_t>(i) * k;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = ncov; j < n; ++j) {
        double s = 0.0;
        const double* bp = b + j;
        for (int p = 0; p < k; ++p, bp += n) s = std::fma(ai[p], *bp, s);
        ci[j] = s;
      }
    }
  }
  if (mcov < m) {
    for (int i = mcov; i < m; ++i) {
      const double* ai = a + static_cast<size_t>(i) * k;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        const double* bp = b + j;
        for (int p = 0; p < k; ++p, bp += n) s = std::fma(ai[p], *bp, s);
        ci[j] = s;
      }
    }
  }
}

// exact data movement, arithmetic-free
void transpose(const double* src, int rows, int cols, std::vector<double>& dst) {
  dst.resize(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (m < 8 || n < 16 || static_cast<int64_t>(m) * k * n < 32768) {
    ref::matmul(a, b, c, m, k, n);
    return;
  }
  matmul_packed(a, b, c, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  if (m < 8 || n < 16 || static_cast<int64_t>(m) * k * n < 32768) {
    ref::matmul_nt(a, b, c, m, k, n);
    return;
  }
  static thread_local std::vector<double> bt;
  transpose(b, n, k, bt);  // [n×k] → [k×n]
  matmul_packed(a, bt.data(), c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  if (m < 8 || n < 16 || static_cast<int64_t>(m) * k * n < 32768) {
    ref::matmul_tn(a, b, c, m, k, n);
    return;
  }
  static thread_local std::vector<double> at;
  transpose(a, k, m, at);  // [k×m] → [m×k]
  matmul_packed(at.data(), b, c, m, k, n);
}

void matmul_sorted(const double* a, const double* b, double* c, int m, int k, int n) {
  static thread_local std::vector<double> prod;
  prod.resize(static_cast<size_t>(k));
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) prod[static_cast<size_t>(p)] = ai[p] * *bp;
      std::sort(prod.begin(), prod.end());
      double s = 0.0;
      for (double v : prod) s += v;
      ci[j] = s;
    }
  }
}

}  // namespace repcount::kernels
