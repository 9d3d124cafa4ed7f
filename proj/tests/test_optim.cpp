#include <doctest.h>

#include <cmath>
#include <random>

#include "sppr/optim.hpp"

using namespace sppr;

TEST_CASE("rmsprop with zero gradient only decays the state") {
  Tensor p = Tensor::from({2}, {1.0, -3.0}, true);
  RmspropState s(2, {0.01, 0.9, 1e-8});
  s.mean_square = {0.5, 2.0};
  p.zero_grad();
  rmsprop_step(p, s);
  CHECK(p.values()[0] == 1.0);
  CHECK(p.values()[1] == -3.0);
  CHECK(s.mean_square[0] == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(s.mean_square[1] == doctest::Approx(1.8).epsilon(1e-15));
}

TEST_CASE("rmsprop hand-evaluated updates") {
  const RmspropHyper hyper{0.01, 0.9, 1e-8};
  Tensor p = Tensor::from({1}, {0.0}, true);
  RmspropState s(1, hyper);
  auto set_grad_one = [&] {
    p.zero_grad();
    backward(sum(p));
  };
  set_grad_one();
  rmsprop_step(p, s);
  CHECK(s.mean_square[0] == doctest::Approx(0.1).epsilon(1e-15));
  const double d1 = p.values()[0];
  CHECK(d1 == doctest::Approx(-0.01 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-14));
  CHECK(std::abs(d1 - -0.0316228) < 1e-7);

  set_grad_one();
  rmsprop_step(p, s);
  CHECK(s.mean_square[0] == doctest::Approx(0.19).epsilon(1e-14));
  const double d2 = p.values()[0] - d1;
  CHECK(std::abs(d2 - -0.022942) < 1e-6);
}

TEST_CASE("rmsprop errors") {
  Tensor untracked = Tensor::from({1}, {0.0});
  RmspropState s(1, {});
  CHECK_THROWS(rmsprop_step(untracked, s));
  Tensor p = Tensor::from({2}, {0.0, 0.0}, true);
  CHECK_THROWS(rmsprop_step(p, s));
}

TEST_CASE("rmsprop state stays non-negative under arbitrary gradients") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 10.0);
  Tensor p = Tensor::from({8}, std::vector<double>(8, 0.0), true);
  RmspropState s(8, {});
  Tensor w = Tensor::zeros({8});
  for (int step = 0; step < 200; ++step) {
    for (auto& v : w.mutable_values()) v = g(rng);
    p.zero_grad();
    backward(sum(mul(p, w)));
    rmsprop_step(p, s);
    for (double v : s.mean_square) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("Rmsprop steps and zeroes gradients") {
  std::vector<Tensor> params{Tensor::from({1}, {1.0}, true), Tensor::from({2}, {1.0, 2.0}, true)};
  Rmsprop opt(params, {});
  backward(add(sum(params[0]), sum(square(params[1]))));
  opt.step(params);
  CHECK(params[0].values()[0] < 1.0);
  for (const auto& p : params) {
    for (double g : p.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("l2 penalty") {
  Tensor w = Tensor::from({2}, {2.0, -2.0}, true);
  std::vector<Tensor> params{w};
  CHECK(l2_penalty(params, 0.0).item() == 0.0);
  Tensor pen = l2_penalty(params, 1.5);
  CHECK(pen.item() == doctest::Approx(3.0).epsilon(1e-15));

  // Gradient is beta * w / N over the combined element count.
  std::vector<Tensor> two{Tensor::from({2}, {2.0, -2.0}, true),
                          Tensor::from({1, 2}, {1.0, 4.0}, true)};
  backward(l2_penalty(two, 1.5));
  CHECK(two[0].grad()[0] == doctest::Approx(1.5 * 2.0 / 4.0));
  CHECK(two[1].grad()[1] == doctest::Approx(1.5 * 4.0 / 4.0));
  CHECK_THROWS(l2_penalty(params, -1.0));
}
