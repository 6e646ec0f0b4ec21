#include "rmbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "rmbench/kernels.hpp"

namespace rmbench {
namespace {

using DataPtr = std::shared_ptr<std::vector<double>>;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void ensure_finite(const double* p, std::size_t n, const char* op) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw NumericalError(std::string(op) + " produced a non-finite value");
  }
}

Tape* merge_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape != nullptr && tape != t->tape())
      throw ContractError("operands are recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

DataPtr alloc(std::size_t n) { return std::make_shared<std::vector<double>>(n); }

Tensor finish(std::vector<int> shape, DataPtr data, Tape* tape,
              std::vector<int> parents, Tape::BackwardFn fn, const char* op) {
  ensure_finite(data->data(), data->size(), op);
  int node = -1;
  if (tape != nullptr)
    node = tape->record(data->size(), std::move(parents), std::move(fn));
  return Tensor::wrap(std::move(shape), std::move(data), tape, node);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_str(a.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor ----------------------------------------------------------

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("constant: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  ensure_finite(data.data(), data.size(), "constant");
  return wrap(std::move(shape), std::make_shared<std::vector<double>>(std::move(data)),
              nullptr, -1);
}

Tensor Tensor::zeros(std::vector<int> shape) {
  const std::size_t n = shape_numel(shape);
  return wrap(std::move(shape), alloc(n), nullptr, -1);
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::wrap(std::vector<int> shape, DataPtr data, Tape* tape, int node) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.tape_ = tape;
  t.node_ = node;
  return t;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item: tensor is not scalar, shape " + shape_str(shape_));
  return (*data_)[0];
}

std::optional<Tensor> Tensor::grad() const {
  if (!tracked() || tape_ == nullptr) return std::nullopt;
  const std::vector<double>* g = tape_->grad_of(node_);
  if (g == nullptr) return std::nullopt;
  return Tensor::constant(shape_, *g);
}

// ---- Tape ------------------------------------------------------------

Tensor Tape::leaf(std::vector<int> shape, std::vector<double> data,
                  bool requires_grad) {
  return leaf(std::move(shape),
              std::make_shared<std::vector<double>>(std::move(data)),
              requires_grad);
}

Tensor Tape::leaf(std::vector<int> shape, DataPtr data, bool requires_grad) {
  if (shape_numel(shape) != data->size())
    throw ShapeError("leaf: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data->size()));
  ensure_finite(data->data(), data->size(), "leaf");
  if (!requires_grad) return Tensor::wrap(std::move(shape), std::move(data), nullptr, -1);
  const int node = record(data->size(), {}, nullptr);
  return Tensor::wrap(std::move(shape), std::move(data), this, node);
}

int Tape::record(std::size_t out_size, std::vector<int> parents, BackwardFn fn) {
  const int id = static_cast<int>(nodes_.size());
  for (int p : parents) {
    if (p < 0 || p >= id)
      throw ContractError("tape: parent does not precede node (broken topology)");
  }
  NodeRec rec;
  rec.parents = std::move(parents);
  rec.back = std::move(fn);
  rec.size = out_size;
  nodes_.push_back(std::move(rec));
  return id;
}

double* Tape::grad_buffer(int node) {
  NodeRec& rec = nodes_[static_cast<std::size_t>(node)];
  if (!rec.has_grad) {
    rec.grad.assign(rec.size, 0.0);
    rec.has_grad = true;
  }
  return rec.grad.data();
}

const std::vector<double>* Tape::grad_of(int node) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size())) return nullptr;
  const NodeRec& rec = nodes_[static_cast<std::size_t>(node)];
  return rec.has_grad ? &rec.grad : nullptr;
}

void Tape::backward(const Tensor& loss) {
  if (backward_ran_) throw ContractError("tape: backward already ran");
  if (!loss.tracked() || loss.tape() != this)
    throw ContractError("backward: loss is not recorded on this tape");
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, shape " +
                        shape_str(loss.shape()));
  backward_ran_ = true;
  grad_buffer(loss.node())[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    NodeRec& rec = nodes_[static_cast<std::size_t>(i)];
    if (!rec.has_grad || !rec.back) continue;
    rec.back(*this, rec.grad.data());
  }
}

int Tape::max_parent(const std::vector<int>& parents) const {
  int m = -1;
  for (int p : parents) m = std::max(m, p);
  return m;
}

// ---- elementwise -----------------------------------------------------

namespace {

// Shared plumbing for binary elementwise ops whose input gradients are
// elementwise functions of (out_grad, other input).
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op,
                          void (*fwd)(const double*, const double*, double*,
                                      std::size_t),
                          Tape::BackwardFn make_back) {
  require_same_shape(a, b, op);
  Tape* tape = merge_tape({&a, &b});
  auto out = alloc(a.size());
  fwd(a.data(), b.data(), out->data(), a.size());
  std::vector<int> parents;
  if (a.tracked()) parents.push_back(a.node());
  if (b.tracked()) parents.push_back(b.node());
  return finish(a.shape(), std::move(out), tape, std::move(parents),
                std::move(make_back), op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const int na = a.node(), nb = b.node();
  const std::size_t n = a.size();
  return binary_elementwise(a, b, "add", kern::active().add,
                            [na, nb, n](Tape& t, const double* g) {
                              if (na >= 0) kern::active().acc(t.grad_buffer(na), g, n);
                              if (nb >= 0) kern::active().acc(t.grad_buffer(nb), g, n);
                            });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const int na = a.node(), nb = b.node();
  const std::size_t n = a.size();
  return binary_elementwise(a, b, "sub", kern::active().sub,
                            [na, nb, n](Tape& t, const double* g) {
                              if (na >= 0) kern::active().acc(t.grad_buffer(na), g, n);
                              if (nb >= 0)
                                kern::active().acc_scaled(t.grad_buffer(nb), g, -1.0, n);
                            });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const int na = a.node(), nb = b.node();
  const std::size_t n = a.size();
  const DataPtr ad = a.storage(), bd = b.storage();
  return binary_elementwise(
      a, b, "mul", kern::active().mul,
      [na, nb, n, ad, bd](Tape& t, const double* g) {
        std::vector<double> tmp(n);
        if (na >= 0) {
          kern::active().mul(g, bd->data(), tmp.data(), n);
          kern::active().acc(t.grad_buffer(na), tmp.data(), n);
        }
        if (nb >= 0) {
          kern::active().mul(g, ad->data(), tmp.data(), n);
          kern::active().acc(t.grad_buffer(nb), tmp.data(), n);
        }
      });
}

Tensor scale(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericalError("scale: non-finite factor");
  auto out = alloc(a.size());
  kern::active().scale(a.data(), c, out->data(), a.size());
  const int na = a.node();
  const std::size_t n = a.size();
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, c, n](Tape& t, const double* g) {
                  kern::active().acc_scaled(t.grad_buffer(na), g, c, n);
                },
                "scale");
}

Tensor add_scalar(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericalError("add_scalar: non-finite addend");
  auto out = alloc(a.size());
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) (*out)[i] = p[i] + c;
  const int na = a.node();
  const std::size_t n = a.size();
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n](Tape& t, const double* g) {
                  kern::active().acc(t.grad_buffer(na), g, n);
                },
                "add_scalar");
}

// ---- matrix ops ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = static_cast<std::size_t>(a.dim(0));
  const std::size_t k = static_cast<std::size_t>(a.dim(1));
  const std::size_t n = static_cast<std::size_t>(b.dim(1));
  auto out = alloc(m * n);
  kern::active().matmul_acc(a.data(), b.data(), out->data(), m, k, n);
  Tape* tape = merge_tape({&a, &b});
  const int na = a.node(), nb = b.node();
  const DataPtr ad = a.storage(), bd = b.storage();
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  return finish({static_cast<int>(m), static_cast<int>(n)}, std::move(out),
                tape, std::move(parents),
                [na, nb, ad, bd, m, k, n](Tape& t, const double* g) {
                  if (na >= 0)
                    kern::active().matmul_tb_acc(g, bd->data(), t.grad_buffer(na), m, n, k);
                  if (nb >= 0)
                    kern::active().matmul_ta_acc(ad->data(), g, t.grad_buffer(nb), m, k, n);
                },
                "matmul");
}

Tensor matmul_tb(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tb");
  require_matrix(b, "matmul_tb");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_tb: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                     "^T");
  const std::size_t m = static_cast<std::size_t>(a.dim(0));
  const std::size_t k = static_cast<std::size_t>(a.dim(1));
  const std::size_t n = static_cast<std::size_t>(b.dim(0));
  auto out = alloc(m * n);
  kern::active().matmul_tb_acc(a.data(), b.data(), out->data(), m, k, n);
  Tape* tape = merge_tape({&a, &b});
  const int na = a.node(), nb = b.node();
  const DataPtr ad = a.storage(), bd = b.storage();
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  return finish({static_cast<int>(m), static_cast<int>(n)}, std::move(out),
                tape, std::move(parents),
                [na, nb, ad, bd, m, k, n](Tape& t, const double* g) {
                  if (na >= 0)
                    kern::active().matmul_acc(g, bd->data(), t.grad_buffer(na), m, n, k);
                  if (nb >= 0)
                    kern::active().matmul_ta_acc(g, ad->data(), t.grad_buffer(nb), m, n, k);
                },
                "matmul_tb");
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_matrix(m, "add_rowvec");
  if (v.ndim() != 1 || v.dim(0) != m.dim(1))
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                     " does not match matrix " + shape_str(m.shape()));
  const std::size_t rows = static_cast<std::size_t>(m.dim(0));
  const std::size_t cols = static_cast<std::size_t>(m.dim(1));
  auto out = alloc(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    kern::active().add(m.data() + r * cols, v.data(), out->data() + r * cols, cols);
  Tape* tape = merge_tape({&m, &v});
  const int nm = m.node(), nv = v.node();
  std::vector<int> parents;
  if (nm >= 0) parents.push_back(nm);
  if (nv >= 0) parents.push_back(nv);
  return finish(m.shape(), std::move(out), tape, std::move(parents),
                [nm, nv, rows, cols](Tape& t, const double* g) {
                  if (nm >= 0) kern::active().acc(t.grad_buffer(nm), g, rows * cols);
                  if (nv >= 0) {
                    double* gv = t.grad_buffer(nv);
                    for (std::size_t r = 0; r < rows; ++r)
                      kern::active().acc(gv, g + r * cols, cols);
                  }
                },
                "add_rowvec");
}

// ---- nonlinearities ---------------------------------------------------

Tensor tanh(const Tensor& a) {
  auto out = alloc(a.size());
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) (*out)[i] = std::tanh(p[i]);
  const int na = a.node();
  const std::size_t n = a.size();
  const DataPtr od = out;
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n, od](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  const double* y = od->data();
                  for (std::size_t i = 0; i < n; ++i)
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                },
                "tanh");
}

Tensor relu(const Tensor& a) {
  auto out = alloc(a.size());
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) (*out)[i] = p[i] > 0.0 ? p[i] : 0.0;
  const int na = a.node();
  const std::size_t n = a.size();
  const DataPtr ad = a.storage();
  // Subgradient 0 at the kink.
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n, ad](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  const double* x = ad->data();
                  for (std::size_t i = 0; i < n; ++i)
                    if (x[i] > 0.0) ga[i] += g[i];
                },
                "relu");
}

// ---- reductions -------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto out = alloc(1);
  (*out)[0] = kern::active().sum(a.data(), a.size());
  const int na = a.node();
  const std::size_t n = a.size();
  return finish({1}, std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  const double g0 = g[0];
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g0;
                },
                "sum");
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DomainError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

namespace {

// lse of a strided slice; writes softmax grad on the way back.
double lse_slice(const double* x, std::size_t n, std::size_t stride) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - m);
  return m + std::log(s);
}

void lse_slice_back(const double* x, std::size_t n, std::size_t stride,
                    double y, double g, double* gx) {
  for (std::size_t i = 0; i < n; ++i)
    gx[i * stride] += g * std::exp(x[i * stride] - y);
}

}  // namespace

Tensor logsumexp(const Tensor& a, int axis) {
  if (a.ndim() == 1) {
    if (axis != 0)
      throw ContractError("logsumexp: axis " + std::to_string(axis) +
                          " invalid for a vector");
    if (a.size() == 0) throw DomainError("logsumexp: empty axis");
    auto out = alloc(1);
    (*out)[0] = lse_slice(a.data(), a.size(), 1);
    const int na = a.node();
    const std::size_t n = a.size();
    const DataPtr ad = a.storage(), od = out;
    return finish({1}, std::move(out), a.tape(),
                  a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                  [na, n, ad, od](Tape& t, const double* g) {
                    lse_slice_back(ad->data(), n, 1, (*od)[0], g[0],
                                   t.grad_buffer(na));
                  },
                  "logsumexp");
  }
  require_matrix(a, "logsumexp");
  if (axis != 0 && axis != 1)
    throw ContractError("logsumexp: axis " + std::to_string(axis) +
                        " invalid for a matrix");
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t cols = static_cast<std::size_t>(a.dim(1));
  const bool over_cols = (axis == 1);  // reduce within each row
  const std::size_t out_n = over_cols ? rows : cols;
  const std::size_t red_n = over_cols ? cols : rows;
  if (red_n == 0) throw DomainError("logsumexp: empty axis");
  auto out = alloc(out_n);
  for (std::size_t i = 0; i < out_n; ++i) {
    const double* base = over_cols ? a.data() + i * cols : a.data() + i;
    (*out)[i] = lse_slice(base, red_n, over_cols ? 1 : cols);
  }
  const int na = a.node();
  const DataPtr ad = a.storage(), od = out;
  return finish({static_cast<int>(out_n)}, std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, ad, od, out_n, red_n, cols, over_cols](Tape& t,
                                                            const double* g) {
                  double* ga = t.grad_buffer(na);
                  for (std::size_t i = 0; i < out_n; ++i) {
                    const std::size_t off = over_cols ? i * cols : i;
                    lse_slice_back(ad->data() + off, red_n,
                                   over_cols ? 1 : cols, (*od)[i], g[i],
                                   ga + off);
                  }
                },
                "logsumexp");
}

Tensor logsumexp_offdiag_rows(const Tensor& a) {
  require_matrix(a, "logsumexp_offdiag_rows");
  if (a.dim(0) != a.dim(1))
    throw ShapeError("logsumexp_offdiag_rows: matrix must be square, got " +
                     shape_str(a.shape()));
  const std::size_t n = static_cast<std::size_t>(a.dim(0));
  if (n < 2) throw DomainError("logsumexp_offdiag_rows: needs >= 2 columns");
  auto out = alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = a.data() + i * n;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += std::exp(row[j] - m);
    (*out)[i] = m + std::log(s);
  }
  const int na = a.node();
  const DataPtr ad = a.storage(), od = out;
  return finish({static_cast<int>(n)}, std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n, ad, od](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  for (std::size_t i = 0; i < n; ++i) {
                    const double* row = ad->data() + i * n;
                    const double y = (*od)[i];
                    for (std::size_t j = 0; j < n; ++j)
                      if (j != i) ga[i * n + j] += g[i] * std::exp(row[j] - y);
                  }
                },
                "logsumexp_offdiag_rows");
}

// ---- normalization & similarity helpers -------------------------------

namespace {

double checked_norm(const double* x, std::size_t n, const char* op) {
  const double sq = kern::active().dot(x, x, n);
  const double nm = std::sqrt(sq);
  if (!(nm > kNormEps))
    throw DomainError(std::string(op) + ": degenerate input, L2 norm " +
                      std::to_string(nm) + " <= 1e-12");
  return nm;
}

// y = x / ||x||; gx += (g - (g . y) y) / ||x||
void l2_back(const double* y, double norm, const double* g, double* gx,
             std::size_t n) {
  const double gy = kern::active().dot(g, y, n);
  for (std::size_t i = 0; i < n; ++i) gx[i] += (g[i] - gy * y[i]) / norm;
}

}  // namespace

Tensor l2_normalize(const Tensor& a) {
  if (a.ndim() != 1)
    throw ShapeError("l2_normalize: expected a vector, got " + shape_str(a.shape()));
  const std::size_t n = a.size();
  const double norm = checked_norm(a.data(), n, "l2_normalize");
  auto out = alloc(n);
  kern::active().scale(a.data(), 1.0 / norm, out->data(), n);
  const int na = a.node();
  const DataPtr od = out;
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n, od, norm](Tape& t, const double* g) {
                  l2_back(od->data(), norm, g, t.grad_buffer(na), n);
                },
                "l2_normalize");
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_matrix(a, "l2_normalize_rows");
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t cols = static_cast<std::size_t>(a.dim(1));
  auto out = alloc(rows * cols);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    norms[r] = checked_norm(a.data() + r * cols, cols, "l2_normalize_rows");
    kern::active().scale(a.data() + r * cols, 1.0 / norms[r],
                         out->data() + r * cols, cols);
  }
  const int na = a.node();
  const DataPtr od = out;
  return finish(a.shape(), std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, rows, cols, od, norms = std::move(norms)](Tape& t,
                                                               const double* g) {
                  double* ga = t.grad_buffer(na);
                  for (std::size_t r = 0; r < rows; ++r)
                    l2_back(od->data() + r * cols, norms[r], g + r * cols,
                            ga + r * cols, cols);
                },
                "l2_normalize_rows");
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  require_matrix(a, "rowwise_dot");
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t cols = static_cast<std::size_t>(a.dim(1));
  auto out = alloc(rows);
  for (std::size_t r = 0; r < rows; ++r)
    (*out)[r] = kern::active().dot(a.data() + r * cols, b.data() + r * cols, cols);
  Tape* tape = merge_tape({&a, &b});
  const int na = a.node(), nb = b.node();
  const DataPtr ad = a.storage(), bd = b.storage();
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  return finish({static_cast<int>(rows)}, std::move(out), tape,
                std::move(parents),
                [na, nb, ad, bd, rows, cols](Tape& t, const double* g) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    if (na >= 0)
                      kern::active().acc_scaled(t.grad_buffer(na) + r * cols,
                                                bd->data() + r * cols, g[r], cols);
                    if (nb >= 0)
                      kern::active().acc_scaled(t.grad_buffer(nb) + r * cols,
                                                ad->data() + r * cols, g[r], cols);
                  }
                },
                "rowwise_dot");
}

namespace {

// Distance below this is treated as zero and receives a zero subgradient.
constexpr double kDistFloor = 1e-15;

}  // namespace

Tensor rowwise_neg_l2(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_neg_l2");
  require_matrix(a, "rowwise_neg_l2");
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t cols = static_cast<std::size_t>(a.dim(1));
  auto out = alloc(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    const double* pa = a.data() + r * cols;
    const double* pb = b.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = pa[c] - pb[c];
      sq += d * d;
    }
    (*out)[r] = -std::sqrt(sq);
  }
  Tape* tape = merge_tape({&a, &b});
  const int na = a.node(), nb = b.node();
  const DataPtr ad = a.storage(), bd = b.storage(), od = out;
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  return finish({static_cast<int>(rows)}, std::move(out), tape,
                std::move(parents),
                [na, nb, ad, bd, od, rows, cols](Tape& t, const double* g) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double dist = -(*od)[r];
                    if (dist < kDistFloor) continue;
                    const double* pa = ad->data() + r * cols;
                    const double* pb = bd->data() + r * cols;
                    const double s = g[r] / dist;
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double d = pa[c] - pb[c];
                      if (na >= 0) t.grad_buffer(na)[r * cols + c] -= s * d;
                      if (nb >= 0) t.grad_buffer(nb)[r * cols + c] += s * d;
                    }
                  }
                },
                "rowwise_neg_l2");
}

Tensor cross_neg_l2(const Tensor& a, const Tensor& b) {
  require_matrix(a, "cross_neg_l2");
  require_matrix(b, "cross_neg_l2");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("cross_neg_l2: dimension mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  const std::size_t m = static_cast<std::size_t>(a.dim(0));
  const std::size_t n = static_cast<std::size_t>(b.dim(0));
  const std::size_t d = static_cast<std::size_t>(a.dim(1));
  auto out = alloc(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      const double* pa = a.data() + i * d;
      const double* pb = b.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = pa[c] - pb[c];
        sq += diff * diff;
      }
      (*out)[i * n + j] = -std::sqrt(sq);
    }
  Tape* tape = merge_tape({&a, &b});
  const int na = a.node(), nb = b.node();
  const DataPtr ad = a.storage(), bd = b.storage(), od = out;
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  return finish({static_cast<int>(m), static_cast<int>(n)}, std::move(out),
                tape, std::move(parents),
                [na, nb, ad, bd, od, m, n, d](Tape& t, const double* g) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const double dist = -(*od)[i * n + j];
                      if (dist < kDistFloor) continue;
                      const double s = g[i * n + j] / dist;
                      const double* pa = ad->data() + i * d;
                      const double* pb = bd->data() + j * d;
                      for (std::size_t c = 0; c < d; ++c) {
                        const double diff = pa[c] - pb[c];
                        if (na >= 0) t.grad_buffer(na)[i * d + c] -= s * diff;
                        if (nb >= 0) t.grad_buffer(nb)[j * d + c] += s * diff;
                      }
                    }
                },
                "cross_neg_l2");
}

// ---- structural ops ----------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
  require_matrix(a, "gather_rows");
  const std::size_t cols = static_cast<std::size_t>(a.dim(1));
  const int nrows = a.dim(0);
  auto out = alloc(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= nrows)
      throw ContractError("gather_rows: index " + std::to_string(rows[i]) +
                          " out of range for " + shape_str(a.shape()));
    std::copy_n(a.data() + static_cast<std::size_t>(rows[i]) * cols, cols,
                out->data() + i * cols);
  }
  const int na = a.node();
  return finish({static_cast<int>(rows.size()), static_cast<int>(cols)},
                std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, rows, cols](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  for (std::size_t i = 0; i < rows.size(); ++i)
                    kern::active().acc(
                        ga + static_cast<std::size_t>(rows[i]) * cols,
                        g + i * cols, cols);
                },
                "gather_rows");
}

Tensor stack_cols(std::span<const Tensor> cols) {
  if (cols.empty()) throw ContractError("stack_cols: no columns");
  const std::size_t n = cols[0].size();
  Tape* tape = nullptr;
  for (const Tensor& c : cols) {
    if (c.ndim() != 1 || c.size() != n)
      throw ShapeError("stack_cols: columns must be equal-length vectors");
    if (c.tracked()) {
      if (tape != nullptr && tape != c.tape())
        throw ContractError("operands are recorded on different tapes");
      tape = c.tape();
    }
  }
  const std::size_t k = cols.size();
  auto out = alloc(n * k);
  for (std::size_t j = 0; j < k; ++j) {
    const double* p = cols[j].data();
    for (std::size_t i = 0; i < n; ++i) (*out)[i * k + j] = p[i];
  }
  std::vector<int> col_nodes(k);
  std::vector<int> parents;
  for (std::size_t j = 0; j < k; ++j) {
    col_nodes[j] = cols[j].node();
    if (col_nodes[j] >= 0) parents.push_back(col_nodes[j]);
  }
  return finish({static_cast<int>(n), static_cast<int>(k)}, std::move(out),
                tape, std::move(parents),
                [col_nodes, n, k](Tape& t, const double* g) {
                  for (std::size_t j = 0; j < k; ++j) {
                    if (col_nodes[j] < 0) continue;
                    double* gc = t.grad_buffer(col_nodes[j]);
                    for (std::size_t i = 0; i < n; ++i) gc[i] += g[i * k + j];
                  }
                },
                "stack_cols");
}

Tensor diag(const Tensor& a) {
  require_matrix(a, "diag");
  if (a.dim(0) != a.dim(1))
    throw ShapeError("diag: matrix must be square, got " + shape_str(a.shape()));
  const std::size_t n = static_cast<std::size_t>(a.dim(0));
  auto out = alloc(n);
  for (std::size_t i = 0; i < n; ++i) (*out)[i] = a.data()[i * n + i];
  const int na = a.node();
  return finish({static_cast<int>(n)}, std::move(out), a.tape(),
                a.tracked() ? std::vector<int>{na} : std::vector<int>{},
                [na, n](Tape& t, const double* g) {
                  double* ga = t.grad_buffer(na);
                  for (std::size_t i = 0; i < n; ++i) ga[i * n + i] += g[i];
                },
                "diag");
}

}  // namespace rmbench
