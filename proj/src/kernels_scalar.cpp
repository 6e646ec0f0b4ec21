#include "rmbench/kernels.hpp"

#include <algorithm>

// Scalar reference kernels. Reductions keep four interleaved accumulator
// lanes — the same shape a 256-bit vector register holds — so the AVX2
// variants reproduce them bit for bit (see the contract in kernels.hpp).

namespace rmbench::kern {
namespace {

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void acc_k(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void acc_scaled_k(double* dst, const double* src, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += c * src[i];
}

double dot_k(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += a[i] * b[i];
    l1 += a[i + 1] * b[i + 1];
    l2 += a[i + 2] * b[i + 2];
    l3 += a[i + 3] * b[i + 3];
  }
  double s = (l0 + l2) + (l1 + l3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_k(const double* a, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += a[i];
    l1 += a[i + 1];
    l2 += a[i + 2];
    l3 += a[i + 3];
  }
  double s = (l0 + l2) + (l1 + l3);
  for (; i < n; ++i) s += a[i];
  return s;
}

double max_k(const double* a, std::size_t n) {
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
  }
  double l0 = a[0], l1 = a[1], l2 = a[2], l3 = a[3];
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) {
    l0 = std::max(l0, a[i]);
    l1 = std::max(l1, a[i + 1]);
    l2 = std::max(l2, a[i + 2]);
    l3 = std::max(l3, a[i + 3]);
  }
  double m = std::max(std::max(l0, l2), std::max(l1, l3));
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

void matmul_acc_k(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_ta_acc_k(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      double* crow = c + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
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

const Ops& scalar_ops() {
  static const Ops ops{add_k,        sub_k,          mul_k,
                       scale_k,      acc_k,          acc_scaled_k,
                       dot_k,        sum_k,          max_k,
                       matmul_acc_k, matmul_ta_acc_k, matmul_tb_acc_k};
  return ops;
}

}  // namespace rmbench::kern
