#include "cape/kernels/dot.hpp"

namespace cape::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double prod = a[i + j] * b[i + j];
      lane[j] = lane[j] + prod;
    }
  }
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

}  // namespace cape::kernels::scalar
