#include "doctest.h"

#include <functional>
#include <random>

#include "fpgen/ops.hpp"
#include "fpgen/optim.hpp"

using namespace fpgen::nn;

namespace {

Tensor random_tensor(Shape s, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.array()) v = u(rng);
  return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) {
  return (out.array().cast<double>() * w.array().cast<double>()).sum();
}

// Compares reverse-mode gradients of sum(w * f(inputs)) against central differences.
double gradcheck(const std::function<Var(std::vector<Var>&)>& f, std::vector<Tensor> inputs, std::mt19937& rng,
                 float h = 1e-2f) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.emplace_back(t, true);
  const Var out = f(vars);
  const Tensor w = random_tensor(out.shape(), rng);
  backward(out, w);

  double num2 = 0.0, diff2 = 0.0, ana2 = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      auto eval = [&](float delta) {
        std::vector<Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == i) t.array()[k] += delta;
          probe.emplace_back(t, false);
        }
        return weighted_sum(f(probe).value(), w);
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double analytic = vars[i].has_grad() ? vars[i].grad().array()[k] : 0.0;
      num2 += numeric * numeric;
      ana2 += analytic * analytic;
      diff2 += (numeric - analytic) * (numeric - analytic);
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(num2), std::sqrt(ana2), 1e-12});
}

constexpr double kTol = 1e-2;

}  // namespace

TEST_CASE("conv2d matches a direct loop") {
  std::mt19937 rng(1);
  const Tensor x = random_tensor({2, 3, 7, 6}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = random_tensor({4, 1, 1, 1}, rng);
  const int stride = 2, pad = 1;
  const Var y = conv2d(Var(x), Var(w), Var(b), stride, pad);
  const int oh = conv_out_size(7, 3, stride, pad), ow = conv_out_size(6, 3, stride, pad);
  REQUIRE(y.shape() == Shape{2, 4, oh, ow});
  double worst = 0.0;
  for (int n = 0; n < 2; ++n) {
    for (int o = 0; o < 4; ++o) {
      for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
          double acc = b.at(o, 0, 0, 0);
          for (int i = 0; i < 3; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = r * stride - pad + ky, ix = c * stride - pad + kx;
                if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                acc += double(w.at(o, i, ky, kx)) * x.at(n, i, iy, ix);
              }
            }
          }
          worst = std::max(worst, std::abs(acc - y.value().at(n, o, r, c)));
        }
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  std::mt19937 rng(2);
  const Tensor x = random_tensor({1, 3, 8, 8}, rng);
  const Tensor w = random_tensor({5, 3, 4, 4}, rng);
  const Var y = conv2d(Var(x), Var(w), Var(), 2, 1);
  const Tensor u = random_tensor(y.shape(), rng);
  const Var xt = conv_transpose2d(Var(u), Var(w), Var(), 2, 1);
  REQUIRE(xt.shape() == x.shape());
  const double lhs = weighted_sum(y.value(), u);
  const double rhs = weighted_sum(xt.value(), x);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("gradient checks") {
  std::mt19937 rng(3);
  SUBCASE("conv2d") {
    auto f = [](std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 2, 1); };
    CHECK(gradcheck(f, {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3, 1, 1, 1}, rng)},
                    rng) < kTol);
  }
  SUBCASE("conv_transpose2d") {
    auto f = [](std::vector<Var>& v) { return conv_transpose2d(v[0], v[1], v[2], 2, 1); };
    CHECK(gradcheck(f, {random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({2, 1, 1, 1}, rng)},
                    rng) < kTol);
  }
  SUBCASE("linear") {
    auto f = [](std::vector<Var>& v) { return linear(v[0], v[1], v[2]); };
    CHECK(gradcheck(f, {random_tensor({4, 6, 1, 1}, rng), random_tensor({3, 6, 1, 1}, rng), random_tensor({3, 1, 1, 1}, rng)},
                    rng) < kTol);
  }
  SUBCASE("batch_norm in training mode") {
    auto f = [](std::vector<Var>& v) {
      BatchNormStats stats{Var(Tensor({2, 1, 1, 1}, 0.0f)), Var(Tensor({2, 1, 1, 1}, 1.0f))};
      return batch_norm(v[0], v[1], v[2], stats, true);
    };
    CHECK(gradcheck(f, {random_tensor({3, 2, 2, 2}, rng), random_tensor({2, 1, 1, 1}, rng, 0.5f, 1.5f),
                        random_tensor({2, 1, 1, 1}, rng)},
                    rng, 1e-3f) < kTol);
  }
  SUBCASE("pointwise activations") {
    // Inputs kept away from the kinks at 0 and 1.
    Tensor x = random_tensor({2, 3, 4, 4}, rng, 0.1f, 0.9f);
    for (Eigen::Index i = 0; i < x.size(); i += 2) x.array()[i] = -x.array()[i];
    CHECK(gradcheck([](std::vector<Var>& v) { return leaky_relu(v[0], 0.2f); }, {x}, rng, 1e-3f) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return relu(v[0]); }, {x}, rng, 1e-3f) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return tanh_unit(v[0]); }, {x}, rng, 1e-3f) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return clamp01(v[0]); }, {x}, rng, 1e-3f) < kTol);
  }
  SUBCASE("arithmetic and layout ops") {
    const Tensor a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 2, 3, 3}, rng);
    const Tensor c = random_tensor({2, 1, 3, 3}, rng);
    CHECK(gradcheck([](std::vector<Var>& v) { return add(v[0], v[1]); }, {a, b}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return add_scaled(v[0], v[1], -0.3f); }, {a, b}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return scale(v[0], 2.5f); }, {a}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return concat_channels(std::span<const Var>(v)); }, {a, c}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return upsample_nearest2x(v[0]); }, {a}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return reshape(v[0], Shape{2, 18, 1, 1}); }, {a}, rng) < kTol);
    CHECK(gradcheck([](std::vector<Var>& v) { return l1_loss(v[0], v[1]); }, {a, b}, rng, 1e-3f) < kTol);
  }
  SUBCASE("composite graph with a shared input") {
    auto f = [](std::vector<Var>& v) {
      const Var h = leaky_relu(conv2d(v[0], v[1], Var(), 1, 1), 0.2f);
      return add_scaled(v[0], conv2d(h, v[1], Var(), 1, 1), 0.2f);
    };
    CHECK(gradcheck(f, {random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng)}, rng, 1e-3f) < kTol);
  }
}

TEST_CASE("joint backward from two roots sums their contributions") {
  std::mt19937 rng(4);
  const Tensor xt = random_tensor({1, 1, 2, 2}, rng);
  Var x1(xt, true), x2(xt, true);
  const Var a1 = scale(x1, 2.0f), b1 = scale(x1, -5.0f);
  const Tensor s1 = random_tensor(a1.shape(), rng), s2 = random_tensor(b1.shape(), rng);
  const std::vector<Var> roots{a1, b1};
  const std::vector<Tensor> seeds{s1, s2};
  backward(std::span<const Var>(roots), std::span<const Tensor>(seeds));
  const Var a2 = scale(x2, 2.0f), b2 = scale(x2, -5.0f);
  backward(a2, s1);
  backward(b2, s2);
  CHECK((x1.grad().array() - x2.grad().array()).abs().maxCoeff() < 1e-6f);
  CHECK((x1.grad().array() - (2.0f * s1.array() - 5.0f * s2.array())).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("inward clamp blocks only gradients that push further out of range") {
  Tensor xt({1, 1, 1, 5});
  xt.array() << -0.5f, -0.5f, 0.3f, 1.4f, 1.4f;
  Tensor g({1, 1, 1, 5});
  g.array() << 1.0f, -1.0f, 2.0f, 1.0f, -1.0f;
  Var x(xt, true);
  const Var y = clamp01_inward(x);
  backward(y, g);
  Eigen::ArrayXf value(5), grad(5);
  value << 0.0f, 0.0f, 0.3f, 1.0f, 1.0f;
  grad << 0.0f, -1.0f, 2.0f, 1.0f, 0.0f;
  CHECK((y.value().array() - value).abs().maxCoeff() == 0.0f);
  CHECK((x.grad().array() - grad).abs().maxCoeff() == 0.0f);
}

TEST_CASE("no tape is recorded under NoGradGuard or through detach") {
  Var x(Tensor({1, 1, 1, 2}, 1.0f), true);
  {
    NoGradGuard guard;
    CHECK(!grad_enabled());
    const Var y = scale(x, 3.0f);
    CHECK(!y.requires_grad());
  }
  CHECK(grad_enabled());
  const Var d = detach(scale(x, 3.0f));
  CHECK(!d.requires_grad());
  CHECK(scale(x, 3.0f).requires_grad());
}

TEST_CASE("batch norm uses running statistics in inference mode") {
  std::mt19937 rng(6);
  BatchNormStats stats{Var(Tensor({2, 1, 1, 1}, 0.0f)), Var(Tensor({2, 1, 1, 1}, 1.0f))};
  const Var gamma(Tensor({2, 1, 1, 1}, 1.0f)), beta(Tensor({2, 1, 1, 1}, 0.0f));
  const Var x(random_tensor({4, 2, 3, 3}, rng, 2.0f, 4.0f));
  const Var train = batch_norm(x, gamma, beta, stats, true);
  // Normalised per channel over batch and space.
  CHECK(std::abs(train.value().array().head(9).mean()) < 1.0);
  CHECK(stats.running_mean.value().array()[0] > 0.1f);
  const Var eval = batch_norm(x, gamma, beta, stats, false);
  const float m0 = stats.running_mean.value().array()[0], v0 = stats.running_var.value().array()[0];
  CHECK(eval.value().at(1, 0, 2, 2) == doctest::Approx((x.value().at(1, 0, 2, 2) - m0) / std::sqrt(v0 + 1e-5f)));
}

TEST_CASE("optimisers descend a quadratic") {
  for (int which = 0; which < 2; ++which) {
    Var p(Tensor({1, 4, 1, 1}, 3.0f), true);
    std::unique_ptr<Optimizer> opt;
    if (which == 0) opt = std::make_unique<RmsProp>(std::vector<Var>{p}, 0.05f);
    else opt = std::make_unique<Adam>(std::vector<Var>{p}, 0.05f);
    for (int i = 0; i < 300; ++i) {
      opt->zero_grad();
      backward(p, p.value());  // d(0.5 |p|^2)/dp = p
      opt->step();
    }
    CHECK(p.value().array().abs().maxCoeff() < 0.2f);
  }
}
