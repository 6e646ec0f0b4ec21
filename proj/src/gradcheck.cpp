#include "rmbench/gradcheck.hpp"

#include <cmath>

namespace rmbench {
namespace {

double eval_at(const ScalarFn& f, const std::vector<Tensor>& points) {
  Tape scratch;
  const Tensor y = f(scratch, points);
  if (y.size() != 1)
    throw ContractError("grad_check: function output is not scalar, shape " +
                        shape_str(y.shape()));
  return y.item();
}

}  // namespace

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                  double h) {
  // Analytic pass: register every input as a leaf and run backward.
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& x : inputs)
    leaves.push_back(tape.leaf(x.shape(), std::vector<double>(x.data(), x.data() + x.size())));
  const Tensor y = f(tape, leaves);
  if (y.size() != 1)
    throw ContractError("grad_check: function output is not scalar, shape " +
                        shape_str(y.shape()));
  tape.backward(y);

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::vector<double>* g = tape.grad_of(leaves[t].node());
    analytic[t] = g ? *g : std::vector<double>(inputs[t].size(), 0.0);
  }

  // Central differences, one coordinate at a time.
  std::vector<std::vector<double>> bufs;
  bufs.reserve(inputs.size());
  for (const Tensor& x : inputs)
    bufs.emplace_back(x.data(), x.data() + x.size());

  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < bufs[t].size(); ++i) {
      const double saved = bufs[t][i];
      auto probe = [&](double v) {
        bufs[t][i] = v;
        std::vector<Tensor> pts;
        pts.reserve(inputs.size());
        for (std::size_t u = 0; u < inputs.size(); ++u)
          pts.push_back(Tensor::constant(inputs[u].shape(), bufs[u]));
        return eval_at(f, pts);
      };
      const double fp = probe(saved + h);
      const double fm = probe(saved - h);
      bufs[t][i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[t][i];
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h) {
  return grad_check(
      [&f](Tape& t, const std::vector<Tensor>& in) { return f(t, in[0]); },
      {x}, h);
}

}  // namespace rmbench
