#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ensplan/nets.hpp"
#include "ensplan/random.hpp"
#include "properties.hpp"

using namespace ensplan;

TEST_CASE("net_init shapes and determinism") {
  const auto lin = net_init(Arch::linear, 16, {}, 1);
  CHECK(lin.params.size() == 17);
  CHECK(lin.param_count() == 17);
  const auto mlp = net_init(Arch::mlp, 16, {50, 50}, 1);
  CHECK(mlp.params.size() == static_cast<std::size_t>(16 * 50 + 50 + 50 * 50 + 50 + 50 + 1));
  CHECK(net_init(Arch::mlp, 16, {50, 50}, 7) == net_init(Arch::mlp, 16, {50, 50}, 7));
  CHECK(net_init(Arch::mlp, 16, {50, 50}, 7).params != net_init(Arch::mlp, 16, {50, 50}, 8).params);
  // Scaled-uniform weights, zero biases.
  for (int i = 0; i < 16; ++i) CHECK(std::abs(lin.params[static_cast<std::size_t>(i)]) <= 1.0 / 4.0);
  CHECK(lin.params[16] == 0.0);
}

TEST_CASE("net_forward special cases") {
  auto lin = net_init(Arch::linear, 5, {}, 2);
  std::fill(lin.params.begin(), lin.params.end(), 0.0);
  CHECK(net_forward(lin, std::vector<double>{1, 2, 3, 4, 5}) == 0.0);

  auto mlp = net_init(Arch::mlp, 4, {6, 3}, 3);
  std::fill(mlp.params.begin(), mlp.params.end(), 0.0);
  mlp.params.back() = 0.75;  // output bias
  CHECK(net_forward(mlp, std::vector<double>{1, -1, 0.5, 2}) == 0.75);
  CHECK(net_forward(mlp, std::vector<double>{0, 0, 0, 0}) == 0.75);

  CHECK_THROWS(net_forward(mlp, std::vector<double>{1, 2}));

  PriorPair pp{net_init(Arch::mlp, 4, {6}, 4), net_init(Arch::mlp, 4, {6}, 5), 0.0};
  const std::vector<double> x{0.3, -0.2, 1.0, 0.0};
  CHECK(pp.forward(x) == net_forward(pp.trainable, x));
  pp.prior_scale = 2.0;
  CHECK(pp.forward(x) == doctest::Approx(net_forward(pp.trainable, x) + 2.0 * net_forward(pp.prior, x)));
}

TEST_CASE("net_grad closed forms") {
  auto lin = net_init(Arch::linear, 3, {}, 9);
  lin.params = {0.5, -1.0, 2.0, 0.25};
  const std::vector<double> x{1.0, 2.0, -1.0};
  std::vector<double> grad;

  SUBCASE("all rows masked out: only the L2 gradient remains") {
    std::vector<Sample> batch{{x, 3.0, 0.0, 0.0}, {x, -1.0, 0.0, 0.0}};
    net_grad(lin, batch, 0.01, grad);
    for (std::size_t k = 0; k < grad.size(); ++k) CHECK(grad[k] == doctest::Approx(2 * 0.01 * lin.params[k]));
  }
  SUBCASE("single sample, no L2: 2 (V - v) x") {
    const double v = net_forward(lin, x);
    std::vector<Sample> batch{{x, 1.5, 1.0, 0.0}};
    const double loss = net_grad(lin, batch, 0.0, grad);
    CHECK(loss == doctest::Approx((v - 1.5) * (v - 1.5)));
    for (int i = 0; i < 3; ++i)
      CHECK(grad[static_cast<std::size_t>(i)] == doctest::Approx(2 * (v - 1.5) * x[static_cast<std::size_t>(i)]));
    CHECK(grad[3] == doctest::Approx(2 * (v - 1.5)));
  }
  SUBCASE("offset shifts the prediction") {
    std::vector<Sample> batch{{x, 1.5, 1.0, 0.5}};
    net_grad(lin, batch, 0.0, grad);
    CHECK(grad[3] == doctest::Approx(2 * (net_forward(lin, x) + 0.5 - 1.5)));
  }
}

TEST_CASE("gradients match central finite differences") {
  for (Arch arch : {Arch::linear, Arch::mlp}) {
    const auto c = testing::gradient_check(arch, 20);
    INFO(c.detail);
    CHECK(c.ok);
  }
}

TEST_CASE("rmsprop update rule") {
  NetParams net{Arch::linear, 0, {}, {0.0}};
  OptState opt = make_opt_state(net);
  CHECK(opt.config.decay == 0.9);
  CHECK(opt.config.epsilon == 1e-8);
  CHECK(opt.config.learning_rate == 2.5e-4);

  SUBCASE("zero gradient leaves parameters unchanged") {
    const std::vector<double> g{0.0};
    rmsprop_step(net, g, opt);
    CHECK(net.params[0] == 0.0);
  }
  SUBCASE("first step from a fresh accumulator") {
    const std::vector<double> g{1.0};
    rmsprop_step(net, g, opt);
    CHECK(opt.accumulator[0] == doctest::Approx(0.1));
    CHECK(net.params[0] == doctest::Approx(-2.5e-4 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("repeated identical gradients: step size tends to lr") {
    const std::vector<double> g{3.0};
    double prev = net.params[0];
    double step = 0.0;
    for (int i = 0; i < 500; ++i) {
      rmsprop_step(net, g, opt);
      step = prev - net.params[0];
      prev = net.params[0];
      CHECK(opt.accumulator[0] >= 0.0);
    }
    CHECK(step == doctest::Approx(2.5e-4).epsilon(1e-6));
  }
}

TEST_CASE("linear regression loss decreases after warm-up") {
  auto net = net_init(Arch::linear, 4, {}, 21);
  OptState opt = make_opt_state(net);
  Rng rng = make_rng(5, 5);
  std::vector<std::vector<double>> xs(10, std::vector<double>(4));
  std::vector<Sample> batch;
  for (auto& x : xs) {
    for (auto& v : x) v = uniform01(rng) * 2 - 1;
    batch.push_back({x, 0.3 * x[0] - 0.7 * x[2] + 0.1, 1.0, 0.0});
  }
  std::vector<double> grad;
  std::vector<double> window_loss;  // mean loss per 50-step window
  for (int step = 0; step < 2000; ++step) {
    const double loss = net_grad(net, batch, 0.0, grad);
    if (step % 50 == 0) window_loss.push_back(0.0);
    window_loss.back() += loss / 50;
    rmsprop_step(net, grad, opt);
  }
  CHECK(window_loss.back() < 0.5 * window_loss.front());
  for (std::size_t w = 2; w < window_loss.size(); ++w) CHECK(window_loss[w] <= window_loss[w - 1] + 1e-6);
}

TEST_CASE("training next to a prior leaves the prior untouched") {
  PriorPair pp{net_init(Arch::mlp, 3, {8}, 1), net_init(Arch::mlp, 3, {8}, 2), 1.0};
  const NetParams frozen = pp.prior;
  OptState opt = make_opt_state(pp.trainable);
  const std::vector<double> x{0.1, 0.5, -0.3};
  std::vector<double> grad;
  for (int i = 0; i < 20; ++i) {
    std::vector<Sample> batch{{x, 1.0, 1.0, pp.prior_scale * net_forward(pp.prior, x)}};
    net_grad(pp.trainable, batch, 1e-4, grad);
    rmsprop_step(pp.trainable, grad, opt);
  }
  CHECK(pp.prior == frozen);
}

TEST_CASE("network checkpoints round-trip bit-exactly") {
  auto net = net_init(Arch::mlp, 7, {5, 4}, 3);
  OptState opt = make_opt_state(net, {1e-3, 0.95, 1e-7});
  std::vector<double> grad(net.param_count(), 0.123);
  rmsprop_step(net, grad, opt);
  std::stringstream buf;
  write_net(buf, net, opt);
  NetParams back;
  OptState back_opt;
  read_net(buf, back, back_opt);
  CHECK(back == net);
  CHECK(back_opt == opt);

  std::stringstream bad("NOTANET!garbage");
  CHECK_THROWS(read_net(bad, back, back_opt));
}
