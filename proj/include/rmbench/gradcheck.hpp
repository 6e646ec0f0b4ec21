#pragma once

#include <functional>
#include <vector>

#include "rmbench/tensor.hpp"

namespace rmbench {

// Scalar-valued function of several inputs, rebuilt from scratch on every
// call. Inputs arrive as tape leaves (analytic pass) or plain constants
// (finite-difference probes); the function must not care which.
using ScalarFn =
    std::function<Tensor(Tape&, const std::vector<Tensor>& inputs)>;

// Central-difference check of the tape gradient. Returns
//   max_i |analytic_i - (f(x+h e_i) - f(x-h e_i)) / 2h| / max(1, |analytic_i|)
// over every coordinate of every input. Throws ContractError when f does not
// return a scalar.
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                  double h = 1e-5);

// Single-input convenience form.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h = 1e-5);

}  // namespace rmbench
