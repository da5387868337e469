#include <cmath>
#include <thread>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sketchgrasp/layers.hpp"
#include "sketchgrasp/ops.hpp"
#include "sketchgrasp/optim.hpp"

using namespace sketchgrasp;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
std::vector<float> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

}  // namespace

TEST_CASE("relu zeroes negatives") {
  const Tensor x = Tensor::from_data({3}, {-1.0f, 2.0f, 0.0f});
  CHECK(values(relu(x)) == std::vector<float>{0.0f, 2.0f, 0.0f});
}

TEST_CASE("smooth_l1 quadratic branch") {
  const Tensor pred = Tensor::from_data({1, 1}, {0.5f});
  const std::vector<float> target{0.0f};
  CHECK(smooth_l1(pred, target).item() == doctest::Approx(0.125));
}

TEST_CASE("3x3 ones kernel over 3x3 ones image") {
  const Tensor x = Tensor::full({3, 3, 1}, 1.0f);
  const Tensor w = Tensor::full({3, 3, 1, 1}, 1.0f);
  const Tensor y = conv2d(x, w, Tensor{}, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y.item() == 9.0f);
}

TEST_CASE("shape mismatch names both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({3, 2});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("backward of sum of squares") {
  const Tensor x = Tensor::parameter({2}, {1.0f, 2.0f});
  backward(sum(mul(x, x)));
  CHECK(grads(x) == std::vector<float>{2.0f, 4.0f});
}

TEST_CASE("dead relu passes no gradient") {
  const Tensor x = Tensor::parameter({1}, {-1.0f});
  backward(sum(relu(x)));
  CHECK(x.grad()[0] == 0.0f);
}

TEST_CASE("backward requires a scalar") {
  const Tensor x = Tensor::parameter({2}, {1.0f, 2.0f});
  CHECK_THROWS_AS(backward(scale(x, 2.0f)), ShapeError);
}

TEST_CASE("gradients accumulate over shared uses") {
  const Tensor x = Tensor::parameter({1}, {3.0f});
  // x used three times: d/dx (x*x + x) = 2x + 1.
  backward(sum(add(mul(x, x), x)));
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  // A second backward adds to the existing buffer.
  backward(sum(x));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("no-grad mode records nothing") {
  const Tensor x = Tensor::parameter({1}, {3.0f});
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("finite checks flag NaN") {
  set_finite_checks(true);
  const Tensor x = Tensor::from_data({1}, {NAN});
  CHECK_THROWS_AS(scale(x, 2.0f), NonFiniteError);
  set_finite_checks(false);
  CHECK_NOTHROW(scale(x, 2.0f));
}

TEST_CASE("every primitive matches finite differences of an f64 reference") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : oracle::primitive_cases(seed)) {
      const auto r = oracle::check_primitive(c, seed + 100);
      INFO(c.name << " seed " << seed);
      CHECK(r.forward_error < 1e-5);
      CHECK(r.grad_error < 1e-3);
    }
  }
}

TEST_CASE("random 5-layer composite matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = oracle::check_primitive(oracle::composite_case(seed), seed);
    INFO("seed " << seed);
    CHECK(r.forward_error < 1e-5);
    CHECK(r.grad_error < 1e-3);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(7);
  std::vector<float> xv(6), wv(6);
  for (auto& v : xv) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : wv) v = static_cast<float>(rng.uniform(-1, 1));
  auto f = [&](const Tensor& x) { return sum(relu(mul(x, Tensor::from_data({6}, wv)))); };
  auto g = [&](const Tensor& x) { return sum(mul(x, x)); };

  const Tensor x1 = Tensor::parameter({6}, xv);
  backward(add(scale(f(x1), 2.0f), scale(g(x1), -3.0f)));
  const Tensor xf = Tensor::parameter({6}, xv), xg = Tensor::parameter({6}, xv);
  backward(f(xf));
  backward(g(xg));
  for (int i = 0; i < 6; ++i) {
    CHECK(x1.grad()[i] == doctest::Approx(2.0 * xf.grad()[i] - 3.0 * xg.grad()[i]).epsilon(1e-6));
  }
}

TEST_CASE("sgd_step single step without momentum") {
  std::vector<Tensor> params{Tensor::parameter({1}, {1.0f})};
  auto state = make_optimizer_state(params, {0.1f, 0.0f, 0.0f});
  params[0].mutable_grad()[0] = 1.0f;
  sgd_step(params, state);
  CHECK(params[0].data()[0] == doctest::Approx(0.9));
  CHECK(params[0].grad()[0] == 0.0f);
}

TEST_CASE("sgd_step momentum recurrence over two steps") {
  std::vector<Tensor> params{Tensor::parameter({1}, {1.0f})};
  auto state = make_optimizer_state(params, {0.1f, 0.9f, 0.0f});
  for (int i = 0; i < 2; ++i) {
    params[0].mutable_grad()[0] = 1.0f;
    sgd_step(params, state);
  }
  CHECK(params[0].data()[0] == doctest::Approx(0.71).epsilon(1e-6));
}

TEST_CASE("sgd_step weight decay with zero gradient") {
  std::vector<Tensor> params{Tensor::parameter({1}, {1.0f})};
  auto state = make_optimizer_state(params, {0.005f, 0.0f, 0.0005f});
  params[0].zero_grad();
  sgd_step(params, state);
  CHECK(params[0].data()[0] == doctest::Approx(0.9999975).epsilon(1e-7));
}

TEST_CASE("sgd_step rejects a missing gradient") {
  std::vector<Tensor> params{Tensor::parameter({1}, {1.0f})};
  auto state = make_optimizer_state(params, {});
  CHECK(state.velocity[0] == std::vector<float>{0.0f});
  CHECK_THROWS(sgd_step(params, state));
}

TEST_CASE("seeded training steps are bitwise reproducible") {
  auto run = [] {
    Rng rng(11);
    Dense layer = make_dense(4, 3, rng);
    std::vector<Tensor> params{layer.w, layer.b};
    auto state = make_optimizer_state(params, {});
    const Tensor x = Tensor::from_data({2, 4}, {1, 2, 3, 4, -1, 0.5f, 0.25f, 2});
    for (int step = 0; step < 5; ++step) {
      for (auto& p : params) p.zero_grad();
      backward(sum(relu(layer(x))));
      sgd_step(params, state);
    }
    return values(layer.w);
  };
  CHECK(run() == run());
}

TEST_CASE("independent tapes on separate threads") {
  std::vector<float> out(2);
  auto work = [&out](int slot) {
    const Tensor x = Tensor::parameter({2}, {1.0f + slot, 2.0f});
    backward(sum(mul(x, x)));
    out[slot] = x.grad()[0];
  };
  std::thread a(work, 0), b(work, 1);
  a.join();
  b.join();
  CHECK(out[0] == 2.0f);
  CHECK(out[1] == 4.0f);
}
