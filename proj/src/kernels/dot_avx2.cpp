#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "cape/kernels/dot.hpp"

// Compiled with -mavx2 (no -mfma), only entered after a CPUID check.

namespace cape::kernels::avx2 {

namespace {

inline double finish(__m256d acc, std::span<const double> a, std::span<const double> b,
                     std::size_t i) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t j = 0; i + j < a.size(); ++j) {
    const double prod = a[i + j] * b[i + j];
    lane[j] = lane[j] + prod;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a.data() + i);
    const __m256d vb = _mm256_loadu_pd(b.data() + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  return finish(acc, a, b, i);
}

void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out) {
  const std::size_t dim = query.size();
  std::size_t r = 0;
  // Two rows per pass share each query load.
  for (; r + 2 <= out.size(); r += 2) {
    const double* r0 = rows.data() + r * dim;
    const double* r1 = r0 + dim;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= dim; i += 4) {
      const __m256d q = _mm256_loadu_pd(query.data() + i);
      acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(q, _mm256_loadu_pd(r0 + i)));
      acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(q, _mm256_loadu_pd(r1 + i)));
    }
    out[r] = finish(acc0, query, std::span<const double>(r0, dim), i);
    out[r + 1] = finish(acc1, query, std::span<const double>(r1, dim), i);
  }
  for (; r < out.size(); ++r) {
    out[r] = dot(query, rows.subspan(r * dim, dim));
  }
}

}  // namespace cape::kernels::avx2

#endif
