#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "cape/error.hpp"
#include "cape/kernels/dot.hpp"

namespace k = cape::kernels;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Straightforward long-double accumulation, independent of the lane layout.
long double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

std::vector<k::Isa> runnable_isas() {
  std::vector<k::Isa> out;
  for (auto isa : {k::Isa::scalar, k::Isa::avx2, k::Isa::neon}) {
    if (k::isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

struct OverrideGuard {
  ~OverrideGuard() { k::set_isa_override(std::nullopt); }
};

}  // namespace

TEST(Kernels, ScalarIsAlwaysSupported) {
  EXPECT_TRUE(k::isa_supported(k::Isa::scalar));
  EXPECT_EQ(k::isa_name(k::Isa::avx2), "avx2");
}

TEST(Kernels, ScalarMatchesNaiveSum) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 256u, 1001u}) {
    auto a = random_vector(rng, n);
    auto b = random_vector(rng, n);
    EXPECT_NEAR(k::scalar::dot(a, b), static_cast<double>(naive_dot(a, b)), 1e-12) << n;
  }
}

TEST(Kernels, EveryVariantIsBitIdenticalToScalar) {
  OverrideGuard guard;
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n <= 300; ++n) {
    auto a = random_vector(rng, n);
    auto b = random_vector(rng, n);
    const double ref = k::scalar::dot(a, b);
    for (auto isa : runnable_isas()) {
      k::set_isa_override(isa);
      EXPECT_TRUE(same_bits(k::dot(a, b), ref)) << k::isa_name(isa) << " n=" << n;
    }
  }
}

TEST(Kernels, DotRowsAgreesWithPerRowDot) {
  OverrideGuard guard;
  std::mt19937_64 rng(3);
  for (std::size_t dim : {1u, 4u, 7u, 256u}) {
    for (std::size_t rows : {0u, 1u, 2u, 3u, 9u}) {
      auto q = random_vector(rng, dim);
      auto m = random_vector(rng, dim * rows);
      for (auto isa : runnable_isas()) {
        k::set_isa_override(isa);
        std::vector<double> out(rows);
        k::dot_rows(q, m, out);
        for (std::size_t r = 0; r < rows; ++r) {
          std::span<const double> row(m.data() + r * dim, dim);
          EXPECT_TRUE(same_bits(out[r], k::scalar::dot(q, row)))
              << k::isa_name(isa) << " dim=" << dim << " row=" << r;
        }
      }
    }
  }
}

TEST(Kernels, SizeMismatchIsRejected) {
  std::vector<double> a(3), b(4), out(2);
  EXPECT_THROW(k::dot(a, b), cape::InputError);
  EXPECT_THROW(k::dot_rows(a, b, out), cape::InputError);
}

TEST(Kernels, OverrideRejectsUnsupportedIsa) {
  OverrideGuard guard;
  for (auto isa : {k::Isa::avx2, k::Isa::neon}) {
    if (!k::isa_supported(isa)) {
      EXPECT_THROW(k::set_isa_override(isa), cape::InputError);
    } else {
      k::set_isa_override(isa);
      EXPECT_EQ(k::active_isa(), isa);
    }
  }
}
