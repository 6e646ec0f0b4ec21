#include "rmbench/kernels.hpp"

// AVX2 variants. This translation unit is compiled with -mavx2 (and without
// -mfma) on x86-64; callers must check cpu_has_avx2() before dispatching
// here. Lane layout matches the scalar reference exactly: a __m256d is the
// four accumulator lanes, combined as (l0+l2)+(l1+l3).

#if defined(__AVX2__)

#include <immintrin.h>

#include <algorithm>

namespace rmbench::kern {
namespace {

inline double hsum_lanes(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);    // l0, l1
  const __m128d hi = _mm256_extractf128_pd(v, 1);  // l2, l3
  const __m128d s = _mm_add_pd(lo, hi);            // l0+l2, l1+l3
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

inline double hmax_lanes(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_max_pd(lo, hi);  // max(l0,l2), max(l1,l3)
  return std::max(_mm_cvtsd_f64(s), _mm_cvtsd_f64(_mm_unpackhi_pd(s, s)));
}

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
  for (; i < n; ++i) out[i] = a[i] * c;
}

void acc_k(double* dst, const double* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i),
                                            _mm256_loadu_pd(src + i)));
  for (; i < n; ++i) dst[i] += src[i];
}

void acc_scaled_k(double* dst, const double* src, double c, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(vc, _mm256_loadu_pd(src + i));
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), p));
  }
  for (; i < n; ++i) dst[i] += c * src[i];
}

double dot_k(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                           _mm256_loadu_pd(b + i)));
  double s = hsum_lanes(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_k(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum_lanes(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double max_k(const double* a, std::size_t n) {
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  double m = hmax_lanes(acc);
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

void matmul_acc_k(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const __m256d av = _mm256_set1_pd(arow[l]);
      const double* brow = b + l * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        const __m256d p0 = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        const __m256d p1 = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j + 4));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), p0));
        _mm256_storeu_pd(crow + j + 4,
                         _mm256_add_pd(_mm256_loadu_pd(crow + j + 4), p1));
      }
      for (; j + 4 <= n; j += 4) {
        const __m256d p = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), p));
      }
      const double avs = arow[l];
      for (; j < n; ++j) crow[j] += avs * brow[j];
    }
  }
}

void matmul_ta_acc_k(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const __m256d av = _mm256_set1_pd(arow[l]);
      double* crow = c + l * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d p = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), p));
      }
      const double avs = arow[l];
      for (; j < n; ++j) crow[j] += avs * brow[j];
    }
  }
}

void matmul_tb_acc_k(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot_k(arow, b + j * k, k);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{add_k,        sub_k,          mul_k,
                       scale_k,      acc_k,          acc_scaled_k,
                       dot_k,        sum_k,          max_k,
                       matmul_acc_k, matmul_ta_acc_k, matmul_tb_acc_k};
  return ops;
}

bool avx2_compiled() { return true; }

}  // namespace rmbench::kern

#else  // !__AVX2__

#include "rmbench/errors.hpp"

namespace rmbench::kern {

const Ops& avx2_ops() {
  throw Error("avx2 kernels not compiled into this binary");
}

bool avx2_compiled() { return false; }

}  // namespace rmbench::kern

#endif
