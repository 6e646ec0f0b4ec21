#include <atomic>
#include <cstdlib>
#include <cstring>

#include "rmbench/errors.hpp"
#include "rmbench/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <cpuid.h>
#define RMBENCH_X86 1
#else
#define RMBENCH_X86 0
#endif

namespace rmbench::kern {
namespace {

Isa pick_default() {
  if (const char* env = std::getenv("RMBENCH_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::kScalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2())
        throw ConfigError("RMBENCH_KERNELS=avx2 but the CPU lacks AVX2");
      return Isa::kAvx2;
    }
    throw ConfigError(std::string("RMBENCH_KERNELS: unknown value '") + env +
                      "' (expected scalar|avx2)");
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& isa_slot() {
  static std::atomic<Isa> isa{pick_default()};
  return isa;
}

}  // namespace

bool cpu_has_avx2() {
#if RMBENCH_X86
  if (!avx2_compiled()) return false;
  unsigned eax = 0, ebx = 0, ecx = 0, edx = 0;
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
  return (ebx & (1u << 5)) != 0;  // CPUID.7.0:EBX bit 5 = AVX2
#else
  return false;
#endif
}

const Ops& active() {
  return active_isa() == Isa::kAvx2 ? avx2_ops() : scalar_ops();
}

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !cpu_has_avx2())
    throw ConfigError("cannot force avx2 kernels: CPU lacks AVX2");
  isa_slot().store(isa, std::memory_order_relaxed);
}

std::string isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace rmbench::kern
