#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dmd/gradcheck.hpp"
#include "dmd/nn.hpp"

using namespace dmd;

TEST_CASE("dense_forward identity layer") {
  LayerParams p;
  p.weight = Tensor({2, 2}, {1, 0, 0, 1});
  p.bias = Tensor::zeros({2});
  Tensor y = dense_forward(p, Tensor({1, 2}, {1, 2}));
  CHECK(y.data() == std::vector<double>{1, 2});
}

TEST_CASE("dense_forward hand computation") {
  LayerParams p;
  p.weight = Tensor({1, 2}, {1, 1});
  p.bias = Tensor({1}, {1});
  CHECK(dense_forward(p, Tensor({1, 2}, {2, 3})).item() == doctest::Approx(6.0));
}

TEST_CASE("dense_forward batching keeps the leading dim") {
  LayerParams p;
  p.weight = Tensor({3, 2}, {1, 0, 0, 1, 1, 1});
  p.bias = Tensor::zeros({3});
  Tensor y = dense_forward(p, Tensor({4, 2}, std::vector<double>(8, 1.0)));
  CHECK(y.shape() == Shape{4, 3});
}

TEST_CASE("dense_forward rejects fan-in mismatch") {
  LayerParams p;
  p.weight = Tensor({1, 2}, {1, 1});
  p.bias = Tensor::zeros({1});
  CHECK_THROWS_AS(dense_forward(p, Tensor({1, 3}, {1, 2, 3})), TensorError);
}

TEST_CASE("dense_forward affine identity: f(ax) = a f(x) - (a-1) b") {
  Rng rng(5);
  LayerParams p = make_dense(3, 2, 1, rng);
  std::vector<double> xv = {0.3, -1.2, 0.7};
  const double alpha = 2.5;
  std::vector<double> axv = xv;
  for (double& v : axv) v *= alpha;
  Tensor fx = dense_forward(p, Tensor({1, 3}, xv));
  Tensor fax = dense_forward(p, Tensor({1, 3}, axv));
  for (std::size_t j = 0; j < 2; ++j) {
    const double expect = alpha * fx.at(j) - (alpha - 1.0) * p.bias.at(j);
    CHECK(fax.at(j) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("init_network is deterministic and shapes match the spec list") {
  auto a = init_network({2, 16, 1}, 7);
  auto b = init_network({2, 16, 1}, 7);
  REQUIRE(a.size() == 2);
  CHECK(a[0].weight.shape() == Shape{16, 2});
  CHECK(a[1].weight.shape() == Shape{1, 16});
  CHECK(a[0].layer_index == 1);
  CHECK(a[1].layer_index == 2);
  CHECK(a[0].weight.data() == b[0].weight.data());
  CHECK(a[1].weight.data() == b[1].weight.data());
  for (double v : a[0].bias.data()) CHECK(v == 0.0);
}

TEST_CASE("init_network rejects short specs") {
  CHECK_THROWS_AS(init_network({4}, 0), TensorError);
}

TEST_CASE("weight sample mean is near zero") {
  // 10^4 draws from U(-limit, limit); mean should be 0 within 3 sigma.
  auto layers = init_network({100, 100}, 123);
  const auto& w = layers[0].weight.data();
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  const double limit = std::sqrt(6.0 / 100.0);
  const double sigma_mean = limit / std::sqrt(3.0 * static_cast<double>(w.size()));
  CHECK(std::abs(mean) < 3.0 * sigma_mean);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto layers = init_network({2, 2}, 1);
  std::vector<Tensor> params = {layers[0].weight, layers[0].bias};
  const auto before = layers[0].weight.data();
  AdamState s;
  s.init_for(params);
  zero_grads(params);
  adam_step(s, params);
  CHECK(layers[0].weight.data() == before);
}

TEST_CASE("adam: first step with constant grad 1 moves by about -lr") {
  Tensor p({1}, {0.0}, true);
  std::vector<Tensor> params = {p};
  AdamState s;
  s.lr = 0.1;
  s.init_for(params);
  p.zero_grad();
  {
    // g = 1: bias-corrected update is lr * 1/(sqrt(1)+eps)
    Tensor loss = sum(p);
    backward(loss);
  }
  adam_step(s, params);
  CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(s.step == 1);
}

TEST_CASE("adam: missing gradient raises") {
  Tensor p({2}, {0.0, 0.0}, true);
  std::vector<Tensor> params = {p};
  AdamState s;
  s.init_for(params);
  CHECK_THROWS_AS(adam_step(s, params), TensorError);
}

TEST_CASE("adam with lr=0 leaves parameters bit-identical") {
  auto layers = init_network({3, 3}, 9);
  auto params = layers[0].weight;
  const auto before = params.data();
  std::vector<Tensor> ps = {params};
  AdamState s;
  s.lr = 0.0;
  s.init_for(ps);
  params.zero_grad();
  backward(sum(square(dense_forward(layers[0], Tensor({1, 3}, {1, 2, 3})))));
  adam_step(s, ps);
  CHECK(params.data() == before);
}

TEST_CASE("two identical runs give identical parameters after N steps") {
  auto run = [] {
    auto layers = init_network({2, 4, 1}, 11);
    Net net;
    net.layers = layers;
    auto params = net.params();
    AdamState s;
    s.init_for(params);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> xv(8);
      for (double& v : xv) v = rng.normal();
      zero_grads(params);
      backward(mean(square(net.forward(Tensor({4, 2}, xv)))));
      adam_step(s, params);
    }
    return layers[0].weight.data();
  };
  CHECK(run() == run());
}

TEST_CASE("every parameter participates in backward on a full pass") {
  Net net;
  net.layers = init_network({2, 8, 8, 1}, 21);
  auto params = net.params();
  zero_grads(params);
  Rng rng(2);
  std::vector<double> xv(16);
  for (double& v : xv) v = rng.normal();
  backward(mean(square(net.forward(Tensor({8, 2}, xv)))));
  for (auto& p : params) {
    bool any_nonzero = false;
    for (double g : p.grad())
      if (g != 0.0) any_nonzero = true;
    CHECK(any_nonzero);
  }
}

TEST_CASE("conv layer: gradient check against central differences") {
  Rng rng(17);
  ConvDims d{1, 2, 3, 3, 5, 5};
  LayerParams conv = make_conv(d, 1, rng);
  std::vector<double> xv(2 * 25);
  for (double& v : xv) v = rng.normal();
  Tensor x({2, 25}, xv);
  double err = finite_diff_check(
      [&](const Tensor& t) { return mean(square(conv_forward(conv, t))); }, x, 1e-5);
  CHECK(err < 1e-6);
  auto f = [&](const Tensor& w) {
    LayerParams probe = conv;
    probe.weight = w;
    return mean(square(conv_forward(probe, x)));
  };
  CHECK(finite_diff_check(f, conv.weight.detached(), 1e-5) < 1e-6);
}

TEST_CASE("conv output shape is (B, out_c*oh*ow)") {
  Rng rng(1);
  ConvDims d{1, 3, 3, 3, 6, 6};
  LayerParams conv = make_conv(d, 1, rng);
  Tensor x({2, 36}, std::vector<double>(72, 0.5));
  CHECK(conv_forward(conv, x).shape() == Shape{2, 3 * 4 * 4});
}
