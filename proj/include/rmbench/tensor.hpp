#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmbench/errors.hpp"

namespace rmbench {

class Tape;

// Dense row-major tensor of 64-bit floats. Values are immutable once the
// tensor is handed to an operation; gradient tracking is opt-in by creating
// the tensor as a tape leaf. Scalars use shape {1}.
//
// Invariants: product(shape) == data size; every public operation leaves only
// finite values behind (non-finite results throw NumericalError).
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::vector<int> shape, std::vector<double> data);
  static Tensor zeros(std::vector<int> shape);
  static Tensor scalar(double v);

  // Internal: wraps existing storage, optionally attached to a tape node.
  static Tensor wrap(std::vector<int> shape,
                     std::shared_ptr<std::vector<double>> data, Tape* tape,
                     int node);

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  const double* data() const { return data_->data(); }
  const std::shared_ptr<std::vector<double>>& storage() const { return data_; }
  double at(std::size_t i) const { return (*data_)[i]; }
  double item() const;  // requires size() == 1

  bool tracked() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Gradient captured by the owning tape's last backward pass. Empty for
  // untracked tensors or before backward. Same shape as the tensor.
  std::optional<Tensor> grad() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode tape. Operations append nodes in execution order, which is a
// topological order by construction (an op's inputs always exist before its
// output). backward() sweeps the node list once, high id to low, so every
// node's rule runs at most once.
//
// A tape is single-threaded; independent tapes may live on separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const double* out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable leaf. requires_grad=false returns a plain
  // constant (nothing recorded). Data buffers are shared, not copied.
  Tensor leaf(std::vector<int> shape, std::vector<double> data,
              bool requires_grad = true);
  Tensor leaf(std::vector<int> shape,
              std::shared_ptr<std::vector<double>> data,
              bool requires_grad = true);

  // Runs reverse accumulation from a scalar loss recorded on this tape.
  // May be called once per tape.
  void backward(const Tensor& loss);

  bool backward_ran() const { return backward_ran_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient buffer of a node after backward; nullptr if none flowed.
  const std::vector<double>* grad_of(int node) const;

  // --- used by operation implementations ---
  int record(std::size_t out_size, std::vector<int> parents, BackwardFn fn);
  double* grad_buffer(int node);  // allocates zeroed storage on first use
  int max_parent(const std::vector<int>& parents) const;

 private:
  struct NodeRec {
    std::vector<int> parents;
    BackwardFn back;
    std::size_t size = 0;
    std::vector<double> grad;
    bool has_grad = false;
  };
  std::vector<NodeRec> nodes_;
  bool backward_ran_ = false;
};

// ---- operations ------------------------------------------------------
// Binary elementwise ops require identical shapes. Results are tracked if
// any operand is tracked; mixing tensors from two different tapes throws.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_tb(const Tensor& a, const Tensor& b);
// [r,c] + [c] broadcast over rows
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);   // -> {1}
Tensor mean(const Tensor& a);  // -> {1}

// Max-shifted log(sum(exp)). 1-D with axis 0 -> {1}; 2-D with axis 1 ->
// {rows} or axis 0 -> {cols}. Exact under arbitrary input magnitude.
Tensor logsumexp(const Tensor& a, int axis = 0);
// Square [n,n]: row i reduces over j != i. Denominator of in-batch
// contrastive terms that exclude the positive.
Tensor logsumexp_offdiag_rows(const Tensor& a);

// Unit-norm projection; inputs with L2 norm <= 1e-12 are rejected.
Tensor l2_normalize(const Tensor& a);
Tensor l2_normalize_rows(const Tensor& a);

Tensor rowwise_dot(const Tensor& a, const Tensor& b);     // [r,c]x2 -> {r}
Tensor rowwise_neg_l2(const Tensor& a, const Tensor& b);  // -> {r}
// [m,d],[n,d] -> [m,n] of -||a_i - b_j||
Tensor cross_neg_l2(const Tensor& a, const Tensor& b);

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
Tensor stack_cols(std::span<const Tensor> cols);  // k vectors {n} -> [n,k]
Tensor diag(const Tensor& a);                     // [n,n] -> {n}

std::string shape_str(const std::vector<int>& shape);
constexpr double kNormEps = 1e-12;

}  // namespace rmbench
