#if defined(__aarch64__)

#include <arm_neon.h>

#include "cape/kernels/dot.hpp"

namespace cape::kernels::neon {

// Lanes {0,1} live in lo, {2,3} in hi.
double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a.data() + i + 2), vld1q_f64(b.data() + i + 2)));
  }
  double lane[4];
  vst1q_f64(lane, lo);
  vst1q_f64(lane + 2, hi);
  for (std::size_t j = 0; i + j < n; ++j) {
    const double prod = a[i + j] * b[i + j];
    lane[j] = lane[j] + prod;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out) {
  const std::size_t dim = query.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = dot(query, rows.subspan(r * dim, dim));
  }
}

}  // namespace cape::kernels::neon

#endif
