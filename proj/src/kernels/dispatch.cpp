#include <atomic>
#include <cstdlib>
#include <string>

#include "cape/error.hpp"
#include "cape/kernels/dot.hpp"

namespace cape::kernels {

namespace {

constexpr int kAuto = -1;
std::atomic<int> g_override{kAuto};

Isa detect() {
  if (const char* env = std::getenv("CAPE_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    if (want == "neon" && isa_supported(Isa::neon)) return Isa::neon;
  }
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa detected() {
  static const Isa isa = detect();
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  const int forced = g_override.load(std::memory_order_relaxed);
  return forced == kAuto ? detected() : static_cast<Isa>(forced);
}

void set_isa_override(std::optional<Isa> isa) {
  if (isa && !isa_supported(*isa)) {
    throw InputError("SIMD variant not supported on this machine: " +
                     std::string(isa_name(*isa)));
  }
  g_override.store(isa ? static_cast<int>(*isa) : kAuto, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("dot: dimension mismatch");
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2: return avx2::dot(a, b);
#endif
#if defined(__aarch64__)
    case Isa::neon: return neon::dot(a, b);
#endif
    default: return scalar::dot(a, b);
  }
}

void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out) {
  if (rows.size() != out.size() * query.size()) {
    throw InputError("dot_rows: row block does not match output size");
  }
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2: return avx2::dot_rows(query, rows, out);
#endif
#if defined(__aarch64__)
    case Isa::neon: return neon::dot_rows(query, rows, out);
#endif
    default: return scalar::dot_rows(query, rows, out);
  }
}

}  // namespace cape::kernels
