#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dmd/gradcheck.hpp"
#include "dmd/nn.hpp"
#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

using namespace dmd;

namespace {

Tensor vec(std::vector<double> v, bool rg = false) {
  Shape s{v.size()};
  return Tensor(s, std::move(v), rg);
}

Tensor randn(const Shape& s, Rng& rng, bool rg = false) {
  std::vector<double> d(numel(s));
  for (double& x : d) x = rng.normal();
  return Tensor(s, std::move(d), rg);
}

}  // namespace

TEST_CASE("elementwise mul is the Hadamard product") {
  Tensor r = mul(vec({1, 2, 3, 4}), vec({1, 0, 1, 0}));
  CHECK(r.data() == std::vector<double>{1, 0, 3, 0});
}

TEST_CASE("elementwise add identity") {
  Tensor r = add(vec({1, 1}), vec({0, 0}));
  CHECK(r.data() == std::vector<double>{1, 1});
}

TEST_CASE("mul backward gives the other factor") {
  Tensor a = vec({0.5}, true);
  Tensor b = vec({0.5}, true);
  backward(sum(mul(a, b)));
  CHECK(a.grad()[0] == doctest::Approx(0.5));
  CHECK(b.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("shape mismatch names both shapes") {
  try {
    add(vec({1, 2, 3}), Tensor({2, 2}, {1, 2, 3, 4}));
    FAIL("expected TensorError");
  } catch (const TensorError& e) {
    std::string msg = e.what();
    CHECK(msg.find("(3)") != std::string::npos);
    CHECK(msg.find("(2,2)") != std::string::npos);
  }
}

TEST_CASE("trailing-dimension broadcasting") {
  // (2,3) + (3,)
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b({3}, {10, 20, 30}, true);
  Tensor c = add(a, b);
  CHECK(c.data() == std::vector<double>{11, 22, 33, 14, 25, 36});
  backward(sum(c));
  CHECK(b.grad() == std::vector<double>{2, 2, 2});  // reduced over the broadcast dim
  CHECK(a.grad() == std::vector<double>(6, 1.0));
}

TEST_CASE("broadcast mul associativity to 1 ulp") {
  Rng rng(7);
  Tensor a = randn({4, 3}, rng);
  Tensor b = randn({3}, rng);
  Tensor c = randn({4, 3}, rng);
  Tensor lhs = mul(mul(a, b), c);
  Tensor rhs = mul(a, mul(b, c));
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double x = lhs.at(i), y = rhs.at(i);
    CHECK(std::abs(x - y) <= std::abs(x) * 1e-15);
  }
}

TEST_CASE("matmul identity") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m).data() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul hand computation") {
  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul backward: grad of A for sum(A*B), B all ones") {
  Tensor a({2, 2}, {1, 0, 0, 1}, true);
  Tensor b({2, 2}, {1, 1, 1, 1});
  backward(sum(matmul(a, b)));
  CHECK(a.grad() == std::vector<double>(4, 2.0));  // dA = dC * B^T = ones * ones^T
}

TEST_CASE("matmul inner-dimension mismatch") {
  CHECK_THROWS_AS(matmul(Tensor({1, 2}, {1, 2}), Tensor({3, 1}, {1, 2, 3})), TensorError);
}

TEST_CASE("backward of x^2 at x=3") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of sum gives all-ones") {
  Tensor x = vec({1, 2, 3, 4}, true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>(4, 1.0));
}

TEST_CASE("backward of log(sigmoid(x)) at 0 is 0.5") {
  Tensor x = Tensor::scalar(0.0, true);
  backward(log(sigmoid(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = vec({1, 2}, true);
  CHECK_THROWS_AS(backward(mul_scalar(x, 2.0)), TensorError);
  clear_tape();
}

TEST_CASE("repeated backward accumulates additively") {
  Tensor x = Tensor::scalar(2.0, true);
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("finite_diff_check: sum of squares") {
  Rng rng(1);
  Tensor x = randn({8}, rng);
  double err = finite_diff_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("finite_diff_check: constant function has zero error") {
  Tensor x = vec({1, 2, 3});
  double err =
      finite_diff_check([](const Tensor&) { return Tensor::scalar(7.0); }, x, 1e-5);
  CHECK(err == 0.0);
}

TEST_CASE("finite_diff_check: 2-layer MLP loss") {
  Rng rng(3);
  auto layers = init_network({4, 8, 1}, 99);
  Net net;
  net.layers = layers;
  net.hidden_act = Activation::Tanh;
  Tensor x = randn({3, 4}, rng);
  // Gradient w.r.t. the input through the whole network.
  double err = finite_diff_check(
      [&](const Tensor& t) { return mean(square(net.forward(t))); }, x, 1e-4);
  CHECK(err < 1e-4);
  // Gradient w.r.t. the first weight matrix.
  auto f = [&](const Tensor& w) {
    Net probe = net;
    probe.layers[0].weight = w;
    return mean(square(probe.forward(x)));
  };
  double werr = finite_diff_check(f, layers[0].weight.detached(), 1e-4);
  CHECK(werr < 1e-4);
}

TEST_CASE("determinism: same seed and op sequence give identical buffers") {
  auto run = [] {
    Rng rng(42);
    Tensor a = randn({5, 5}, rng, true);
    Tensor b = randn({5, 5}, rng);
    Tensor loss = mean(square(matmul(a, b)));
    backward(loss);
    return std::make_pair(loss.item(), a.grad());
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("gradients flow through but do not accumulate on frozen leaves") {
  Tensor a = vec({2.0}, true);
  Tensor b = vec({3.0}, true);
  freeze_until_backward({b});
  backward(sum(mul(a, b)));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK_FALSE(b.has_grad());
  // The freeze expires with the tape: a fresh pass accumulates on b again.
  backward(sum(mul(a, b)));
  CHECK(b.grad()[0] == doctest::Approx(2.0));
}
