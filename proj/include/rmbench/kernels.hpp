#pragma once

#include <cstddef>
#include <string>

namespace rmbench::kern {

// Dense double-precision kernels behind the tensor core. Every kernel has a
// scalar reference implementation and an AVX2 variant selected at runtime.
//
// Numeric contract (holds for both ISAs, so variants are bit-identical):
// - Elementwise kernels apply the same per-element operation in index order.
// - Reductions (sum/dot/max, and the dot inside matmul_tb_acc) accumulate in
//   four interleaved lanes: lane m sees elements m, m+4, m+8, ...; lanes
//   combine as (l0+l2)+(l1+l3); any tail (n % 4) folds in sequentially.
// - matmul_acc / matmul_ta_acc iterate (i, l, j) with j innermost; each
//   output element receives contributions in the same order on both ISAs.
// - No fused multiply-add anywhere; translation units build with
//   -ffp-contract=off so the compiler cannot contract behind our back.
struct Ops {
  // out[i] = a[i] <op> b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * c
  void (*scale)(const double* a, double c, double* out, std::size_t n);
  // dst[i] += src[i]
  void (*acc)(double* dst, const double* src, std::size_t n);
  // dst[i] += c * src[i]
  void (*acc_scaled)(double* dst, const double* src, double c, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);  // n >= 1

  // C[m x n] += A[m x k] * B[k x n], row-major.
  void (*matmul_acc)(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n);
  // C[k x n] += A^T * B with A[m x k], B[m x n].
  void (*matmul_ta_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A * B^T with A[m x k], B[n x k].
  void (*matmul_tb_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);
};

enum class Isa { kScalar, kAvx2 };

bool cpu_has_avx2();    // CPU supports AVX2 and the AVX2 TU was built
bool avx2_compiled();   // AVX2 code is present in this binary

const Ops& scalar_ops();
const Ops& avx2_ops();  // only callable when cpu_has_avx2()

// Active dispatch table. Resolved once: RMBENCH_KERNELS=scalar|avx2 wins,
// otherwise the best ISA the CPU supports. force_isa() overrides (tests).
const Ops& active();
Isa active_isa();
void force_isa(Isa isa);

std::string isa_name(Isa isa);

}  // namespace rmbench::kern
