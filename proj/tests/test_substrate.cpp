#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "op_suite.hpp"
#include "mmict/autograd.hpp"
#include "mmict/errors.hpp"
#include "mmict/tensor.hpp"

using namespace mmict;
using namespace mmict::testing;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

constexpr int kInstances = 20;

}  // namespace

TEST_CASE("matmul: identity, annihilator, naive oracle, shape error") {
  Rng rng(1);
  const Tensor a = random_tensor({3, 3}, rng);
  CHECK(matmul(Tensor::identity(3), a) == a);
  CHECK(matmul(a, Tensor({3, 3})) == Tensor({3, 3}));
  for (int i = 0; i < kInstances; ++i) {
    const Tensor x = random_tensor({3, 3}, rng);
    const Tensor y = random_tensor({3, 3}, rng);
    CHECK(max_abs_diff(matmul(x, y), naive_matmul(x, y)) < 1e-12);
  }
  const Tensor r = random_tensor({4, 5}, rng);
  const Tensor s = random_tensor({5, 2}, rng);
  CHECK(max_abs_diff(matmul(r, s), naive_matmul(r, s)) < 1e-12);
  try {
    (void)matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax: uniform, shift invariance, closed form, row sums") {
  const Tensor u = softmax(Tensor({4}, 3.0), 0);
  for (double v : u.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  Rng rng(2);
  const Tensor x = random_tensor({3, 5}, rng);
  Tensor shifted = x;
  for (double& v : shifted.values()) v += 17.5;
  CHECK(max_abs_diff(softmax(x, 1), softmax(shifted, 1)) < 1e-12);

  const Tensor two = softmax(Tensor({2}, std::vector<double>{0.0, std::log(2.0)}), 0);
  CHECK(std::abs(two[0] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(two[1] - 2.0 / 3.0) < 1e-15);

  const Tensor big = random_tensor({6, 7}, rng, 30.0);
  const Tensor s1 = softmax(big, 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (double v : s1.row(r)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  const Tensor s0 = softmax(big, 0);
  for (std::size_t c = 0; c < 7; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < 6; ++r) sum += s0.at(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS((void)softmax(big, 2), ShapeError);
}

TEST_CASE("layer_norm: constant row, zero gamma, direct formula, zero mean") {
  const Tensor ones = Tensor::matrix(1, 3, {1, 1, 1});
  const Tensor g1({3}, 1.0);
  const Tensor b0({3});
  CHECK(layer_norm(ones, g1, b0) == Tensor({1, 3}));

  Rng rng(3);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor beta = random_tensor({3}, rng);
  const Tensor y = layer_norm(x, Tensor({3}), beta);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(y.at(r, c) == beta[c]);
  }

  const Tensor row = Tensor::matrix(1, 3, {1, 2, 3});
  const Tensor out = layer_norm(row, g1, b0);
  const double mean = 2.0;
  const double var = 2.0 / 3.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double expect = (static_cast<double>(c + 1) - mean) / std::sqrt(var + 1e-5);
    CHECK(std::abs(out.at(0, c) - expect) < 1e-12);
  }

  const Tensor z = layer_norm(random_tensor({5, 8}, rng, 4.0), Tensor({8}, 1.0), Tensor({8}));
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0.0;
    for (double v : z.row(r)) m += v;
    CHECK(std::abs(m / 8.0) < 1e-9);
  }
}

TEST_CASE("gelu: zero, asymptote, direct formula") {
  CHECK(gelu_scalar(0.0) == 0.0);
  for (double x : {6.0, 7.5, 10.0, 50.0}) CHECK(std::abs(gelu_scalar(x) - x) < 1e-6);
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double expect = 0.5 * 1.0 * (1.0 + std::tanh(c * (1.0 + 0.044715)));
  CHECK(std::abs(gelu_scalar(1.0) - expect) < 1e-15);
  const Tensor t = gelu(Tensor({3}, std::vector<double>{0.0, 1.0, -1.0}));
  CHECK(t[1] == gelu_scalar(1.0));
  CHECK(t[2] == gelu_scalar(-1.0));
}

TEST_CASE("cross_entropy: uniform, saturation, hand value, errors") {
  Tape tape;
  Var uniform = tape.constant(Tensor({3, 10}, 0.7));
  const std::vector<int> t3 = {1, 4, 9};
  CHECK(std::abs(cross_entropy(uniform, t3, {true, true, true}).value().item() - std::log(10.0)) < 1e-12);

  Tensor sat({1, 5});
  sat.at(0, 2) = 30.0;
  CHECK(cross_entropy(tape.constant(sat), std::vector<int>{2}, {true}).value().item() < 1e-9);

  // Row 0: logits [1, 2, 0], target 1; row 1: logits [0, 0, 3], target 0.
  const Tensor hand = Tensor::matrix(2, 3, {1, 2, 0, 0, 0, 3});
  const double l0 = -(2.0 - std::log(std::exp(1.0) + std::exp(2.0) + 1.0));
  const double l1 = -(0.0 - std::log(2.0 + std::exp(3.0)));
  const std::vector<int> t2 = {1, 0};
  CHECK(std::abs(cross_entropy(tape.constant(hand), t2, {true, true}).value().item() - (l0 + l1) / 2.0) < 1e-12);
  CHECK(std::abs(cross_entropy(tape.constant(hand), t2, {false, true}).value().item() - l1) < 1e-12);

  CHECK_THROWS_AS((void)cross_entropy(tape.constant(hand), t2, {false, false}), ContractError);
  const std::vector<int> bad = {1, 3};
  CHECK_THROWS_AS((void)cross_entropy(tape.constant(hand), bad, {true, true}), ContractError);
}

TEST_CASE("backward: sum gives ones, frozen graphs get nothing, non-scalar rejected") {
  Rng rng(4);
  Parameter w = make_param("w", random_tensor({3, 4}, rng));
  {
    Tape tape;
    backward(sum(tape.param(w)));
    REQUIRE(w.grad);
    for (double g : w.grad->values()) CHECK(g == 1.0);
  }
  Parameter frozen{"f", random_tensor({2, 2}, rng), false, std::nullopt};
  const Tensor before = frozen.value;
  {
    Tape tape;
    Var l = sum(matmul(tape.param(frozen), tape.param(frozen)));
    CHECK(tape.gradients(l).empty());
    backward(l);
  }
  CHECK_FALSE(frozen.grad);
  CHECK(frozen.value == before);
  {
    Tape tape;
    CHECK_THROWS_AS((void)tape.gradients(tape.param(w)), ContractError);
  }
}

TEST_CASE("gradient correctness of every operation against central differences") {
  double worst = 0.0;
  run_op_suite(kInstances, 5, [&](const std::string& op, const GradCheck& r) {
    CAPTURE(op);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  });
  MESSAGE("worst relative error: " << worst);
}

TEST_CASE("operations never mutate their inputs") {
  Rng rng(6);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor a0 = a, b0 = b;
  (void)matmul(a, b);
  (void)softmax(a, 1);
  (void)layer_norm(a, Tensor({4}, 1.0), Tensor({4}));
  (void)gelu(a);
  (void)add(a, a);
  CHECK(a == a0);
  CHECK(b == b0);

  Parameter p = make_param("p", a);
  Tape tape;
  Var x = tape.param(p);
  backward(sum(gelu(layer_norm(softmax(x, 1), tape.constant(Tensor({4}, 1.0)), tape.constant(Tensor({4}))))));
  CHECK(p.value == a0);
}

TEST_CASE("zero-size dimensions are allowed") {
  const Tensor empty({0, 4});
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 4);
  CHECK(matmul(empty, Tensor({4, 3})).shape() == Shape{0, 3});
}
