#pragma once

// Dot-product kernels behind embedding similarity.
//
// Every variant accumulates into four lanes (element i goes to lane i % 4),
// multiplies and adds without fusion, and reduces as (l0 + l1) + (l2 + l3).
// Because the summation order is fixed, the scalar reference and each SIMD
// variant return bit-identical results, so similarity rankings do not depend
// on the host CPU.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace cape::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

// Whether `isa` can run on this machine (scalar always can).
bool isa_supported(Isa isa);

// ISA used by the dispatching entry points. Chosen once from CPU features;
// the CAPE_SIMD environment variable ("scalar", "avx2", "neon") may pin it.
Isa active_isa();

// Test hook: force a variant (nullopt restores automatic selection).
// Throws InputError for an ISA the machine cannot run.
void set_isa_override(std::optional<Isa> isa);

// a.size() must equal b.size().
double dot(std::span<const double> a, std::span<const double> b);

// out[r] = dot(query, rows[r*dim .. r*dim+dim)). rows.size() == out.size() * dim.
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out);

namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(std::span<const double> a, std::span<const double> b);
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out);
}  // namespace neon
#endif

}  // namespace cape::kernels
