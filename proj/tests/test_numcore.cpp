#include <doctest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "rmbench/gradcheck.hpp"
#include "rmbench/rng.hpp"
#include "rmbench/tensor.hpp"

using namespace rmbench;

namespace {

Tensor random_const(Rng& rng, std::vector<int> shape, double lo = -1.5,
                    double hi = 1.5) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("tensor invariants: shape/data agreement") {
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::constant({2}, {1.0, std::nan("")}), NumericalError);
  const Tensor t = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.shape() == std::vector<int>{2, 3});
}

TEST_CASE("matmul: identity and hand product") {
  const Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  const Tensor r = matmul(eye, eye);
  CHECK(r.at(0) == 1.0);
  CHECK(r.at(1) == 0.0);
  CHECK(r.at(2) == 0.0);
  CHECK(r.at(3) == 1.0);

  const Tensor a = Tensor::constant({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::constant({2, 1}, {1, 1});
  const Tensor c = matmul(a, b);
  CHECK(c.at(0) == 3.0);
  CHECK(c.at(1) == 7.0);

  CHECK_THROWS_WITH_AS(matmul(a, Tensor::constant({3, 1}, {1, 1, 1})),
                       doctest::Contains("[2,2]"), ShapeError);
}

TEST_CASE("matmul gradient vs central finite differences") {
  Rng rng(42);
  const Tensor a0 = random_const(rng, {3, 4});
  const Tensor b0 = random_const(rng, {4, 2});
  // f(A,B) = sum((A B)^2)
  const double err = grad_check(
      [](Tape&, const std::vector<Tensor>& in) {
        const Tensor p = matmul(in[0], in[1]);
        return sum(mul(p, p));
      },
      {a0, b0});
  CHECK(err < 1e-6);
}

TEST_CASE("logsumexp: values and stability") {
  const Tensor x = Tensor::constant({3}, {0, 0, 0});
  CHECK(logsumexp(x).item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // max-shift: huge inputs may not overflow
  const Tensor big = Tensor::constant({2}, {1000.0, 1000.0});
  CHECK(logsumexp(big).item() ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  Rng rng(7);
  const Tensor r = random_const(rng, {5}, -3.0, 3.0);
  double naive = 0.0;
  for (std::size_t i = 0; i < 5; ++i) naive += std::exp(r.at(i));
  naive = std::log(naive);
  CHECK(std::abs(logsumexp(r).item() - naive) < 1e-12);

  CHECK_THROWS_AS(logsumexp(Tensor::constant({3}, {1, 2, 3}), 1), ContractError);
}

TEST_CASE("logsumexp shift identity (property)") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const Tensor x = random_const(rng, {n}, -5.0, 5.0);
    const double c = rng.uniform(-100.0, 100.0);
    const double lhs = logsumexp(add_scalar(x, c)).item() - c;
    const double rhs = logsumexp(x).item();
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("logsumexp over matrix axes") {
  const Tensor m = Tensor::constant({2, 3}, {0, 0, 0, 1, 1, 1});
  const Tensor rows = logsumexp(m, 1);
  CHECK(rows.at(0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(rows.at(1) == doctest::Approx(1.0 + std::log(3.0)).epsilon(1e-12));
  const Tensor cols = logsumexp(m, 0);
  CHECK(cols.size() == 3);
  CHECK(cols.at(0) ==
        doctest::Approx(std::log(std::exp(0.0) + std::exp(1.0))).epsilon(1e-12));

  Rng rng(5);
  const Tensor r = random_const(rng, {4, 6});
  const double err = grad_check(
      [](Tape&, const std::vector<Tensor>& in) { return sum(logsumexp(in[0], 1)); },
      {r});
  CHECK(err < 1e-6);
}

TEST_CASE("logsumexp_offdiag_rows excludes the diagonal") {
  const Tensor m = Tensor::constant({2, 2}, {100.0, 0.0, 1.0, -100.0});
  const Tensor o = logsumexp_offdiag_rows(m);
  CHECK(o.at(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(o.at(1) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(6);
  const Tensor r = random_const(rng, {5, 5});
  const double err = grad_check(
      [](Tape&, const std::vector<Tensor>& in) {
        return sum(logsumexp_offdiag_rows(in[0]));
      },
      {r});
  CHECK(err < 1e-6);
}

TEST_CASE("l2_normalize: 3-4-5 triangle and identity") {
  const Tensor v = Tensor::constant({2}, {3, 4});
  const Tensor n = l2_normalize(v);
  CHECK(n.at(0) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(n.at(1) == doctest::Approx(0.8).epsilon(1e-14));

  const Tensor u = Tensor::constant({2}, {1, 0});
  const Tensor nu = l2_normalize(u);
  CHECK(nu.at(0) == 1.0);
  CHECK(nu.at(1) == 0.0);

  CHECK_THROWS_AS(l2_normalize(Tensor::constant({2}, {0.0, 0.0})), DomainError);
  CHECK_THROWS_AS(l2_normalize(Tensor::constant({2}, {1e-13, 0.0})), DomainError);
}

TEST_CASE("l2_normalize gradient vs finite differences") {
  Rng rng(11);
  const Tensor x = random_const(rng, {8}, 0.2, 1.5);
  const Tensor w = random_const(rng, {8});
  const double err = grad_check(
      [&w](Tape&, const std::vector<Tensor>& in) {
        return sum(mul(l2_normalize(in[0]), w));
      },
      {x});
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check on exact quadratic") {
  Rng rng(3);
  const Tensor x = random_const(rng, {6});
  const double err = grad_check(
      [](Tape&, const std::vector<Tensor>& in) { return sum(mul(in[0], in[0])); },
      {x});
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check rejects non-scalar functions") {
  const Tensor x = Tensor::constant({3}, {1, 2, 3});
  CHECK_THROWS_AS(grad_check([](Tape&, const std::vector<Tensor>& in) { return in[0]; },
                             {x}),
                  ContractError);
}

TEST_CASE("composed graph gradient: every op in one function") {
  Rng rng(17);
  const Tensor a = random_const(rng, {3, 4}, 0.3, 1.2);
  const Tensor b = random_const(rng, {3, 4}, 0.3, 1.2);
  const Tensor w = random_const(rng, {4, 3});
  const Tensor bias = random_const(rng, {3});
  const double err = grad_check(
      [](Tape&, const std::vector<Tensor>& in) {
        const Tensor h = tanh(add_rowvec(matmul(in[0], in[2]), in[3]));
        const Tensor an = l2_normalize_rows(in[0]);
        const Tensor bn = l2_normalize_rows(in[1]);
        const Tensor sims = rowwise_dot(an, bn);
        const Tensor cross = matmul_tb(an, bn);
        const Tensor lse = logsumexp_offdiag_rows(cross);
        const Tensor hinge = relu(add_scalar(sub(lse, sims), 0.1));
        const Tensor nl2 = rowwise_neg_l2(in[0], in[1]);
        std::vector<Tensor> cols{sims, lse, nl2};
        const Tensor stacked = stack_cols(cols);
        return add(add(sum(hinge), mean(h)),
                   add(sum(logsumexp(stacked, 1)), sum(diag(cross))));
      },
      {a, b, w, bias});
  CHECK(err < 1e-4);
}

TEST_CASE("gather_rows accumulates duplicate indices") {
  const Tensor m = Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  Tape tape;
  const Tensor leaf = tape.leaf({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor g = gather_rows(leaf, {0, 0, 2});
  CHECK(g.shape() == std::vector<int>{3, 2});
  CHECK(g.at(0) == 1.0);
  CHECK(g.at(5) == 6.0);
  tape.backward(sum(g));
  const auto grad = *tape.grad_of(leaf.node());
  CHECK(grad[0] == 2.0);  // row 0 gathered twice
  CHECK(grad[2] == 0.0);  // row 1 untouched
  CHECK(grad[4] == 1.0);

  CHECK_THROWS_AS(gather_rows(m, {3}), ContractError);
}

TEST_CASE("tape topology and single-visit backward") {
  Tape tape;
  const Tensor x = tape.leaf({2}, {1.0, 2.0});
  const Tensor y = add(x, x);  // same parent twice
  const Tensor z = sum(mul(y, y));
  tape.backward(z);
  // d/dx sum((2x)^2) = 8x
  const auto g = *tape.grad_of(x.node());
  CHECK(g[0] == doctest::Approx(8.0));
  CHECK(g[1] == doctest::Approx(16.0));
  CHECK_THROWS_AS(tape.backward(z), ContractError);  // one pass per tape
}

TEST_CASE("operations are deterministic") {
  Rng rng(31);
  const Tensor a = random_const(rng, {16, 16});
  const Tensor b = random_const(rng, {16, 16});
  const Tensor c1 = matmul(a, b);
  const Tensor c2 = matmul(a, b);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1.at(i) == c2.at(i));
}

TEST_CASE("non-finite results do not escape") {
  const Tensor big = Tensor::constant({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(big, big), NumericalError);
}

TEST_CASE("independent tapes run in parallel threads") {
  auto work = [](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> av(64), bv(64);
    for (auto& x : av) x = rng.uniform(-1, 1);
    for (auto& x : bv) x = rng.uniform(-1, 1);
    Tape tape;
    const Tensor a = tape.leaf({8, 8}, av);
    const Tensor b = tape.leaf({8, 8}, bv);
    const Tensor loss = sum(mul(matmul(a, b), matmul(a, b)));
    tape.backward(loss);
    return (*tape.grad_of(a.node()))[0];
  };
  const double serial0 = work(1), serial1 = work(2);
  double out0 = 0, out1 = 0;
  std::thread t0([&] { out0 = work(1); });
  std::thread t1([&] { out1 = work(2); });
  t0.join();
  t1.join();
  CHECK(out0 == serial0);
  CHECK(out1 == serial1);
}
