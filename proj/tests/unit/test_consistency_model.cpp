#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "act/consistency_model.hpp"
#include "act/errors.hpp"
#include "oracles.hpp"

using namespace act;
using act::testing::fd_gradient;
using act::testing::rel_err;

namespace {

constexpr double kEps = 0.002;

BackboneSpec spec() {
  BackboneSpec s;
  s.widths = {16, 16};
  s.time_embed_dim = 8;
  return s;
}

torch::Tensor randn(std::vector<std::int64_t> shape, std::uint64_t seed, double scale = 1.0) {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  return scale * torch::randn(shape, gen, torch::kFloat64);
}

void randomize(torch::nn::Module& m, std::uint64_t seed) {
  auto flat = flatten_parameters(m);
  assign_flat_parameters(m, randn(flat.sizes().vec(), seed, 0.5));
}

}  // namespace

TEST(Coefficients, Boundary) {
  auto c = coefficients(kEps, kEps);
  EXPECT_EQ(c.c_skip, 1.0);
  EXPECT_EQ(c.c_out, 0.0);
  EXPECT_EQ(c.c_in, 2.0);
}

TEST(Coefficients, ClosedForms) {
  auto c = coefficients(kEps + 0.5, kEps);
  EXPECT_NEAR(c.c_skip, 0.5, 1e-12);
  EXPECT_NEAR(c.c_out, 0.5 * 0.5 / std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(c.c_out, 0.35355, 5e-6);
  EXPECT_NEAR(c.c_in, 1.41421, 5e-6);

  const double r = 80.0 - kEps;
  auto d = coefficients(80.0, kEps);
  EXPECT_NEAR(d.c_skip, 0.25 / (r * r + 0.25), 1e-18);
  EXPECT_NEAR(d.c_skip, 3.906e-5, 5e-9);
  EXPECT_NEAR(d.c_out, 0.49999, 1e-5);
  EXPECT_NEAR(d.c_in, 0.01250, 1e-6);
  EXPECT_LT(d.c_out, 0.5);
}

TEST(Coefficients, BelowEpsilon) { EXPECT_THROW(coefficients(0.001, kEps), DomainError); }

TEST(ConsistencyModel, BoundaryIsExact) {
  ConsistencyModel m(spec(), kEps, 80.0, 1);
  randomize(m.online(), 2);
  auto x = randn({10000, 2}, 3, 10.0);
  auto out = m.forward(x, kEps);
  const double tol = 4.0 * std::numeric_limits<double>::epsilon();
  EXPECT_TRUE(((out - x).abs() <= tol * x.abs()).all().item<bool>());
  EXPECT_EQ(m.boundary_residual(x), 0.0);
}

TEST(ConsistencyModel, ZeroBackboneIsSkipOnly) {
  ConsistencyModel m(spec(), kEps, 80.0, 4);
  auto x = randn({7, 2}, 5);
  for (double t : {0.01, 1.0, 80.0}) {
    EXPECT_TRUE(torch::allclose(m.forward(x, t), coefficients(t, kEps).c_skip * x, 0.0, 1e-15));
  }
}

TEST(ConsistencyModel, OutOfRangeTime) {
  ConsistencyModel m(spec(), kEps, 80.0, 4);
  auto x = randn({2, 2}, 5);
  EXPECT_THROW(m.forward(x, 0.001), DomainError);
  EXPECT_THROW(m.forward(x, 81.0), DomainError);
}

TEST(ConsistencyModel, LinearInBackbone) {
  // Output bias only: F = b constant, x = 0, r = 0.5 -> c_out * b.
  ConsistencyModel m(spec(), kEps, 80.0, 6);
  {
    torch::NoGradGuard ng;
    auto params = m.online().named_parameters();
    params["out.bias"].copy_(torch::tensor({1.0, -2.0}, torch::kFloat64));
  }
  auto out = m.forward(torch::zeros({1, 2}, torch::kFloat64), kEps + 0.5);
  EXPECT_NEAR(out[0][0].item<double>(), 0.35355339, 1e-8);
  EXPECT_NEAR(out[0][1].item<double>(), -0.70710678, 1e-8);

  // alpha F1 + beta F2 through the output layer.
  ConsistencyModel a(spec(), kEps, 80.0, 7), b(spec(), kEps, 80.0, 7), mix(spec(), kEps, 80.0, 7);
  randomize(a.online(), 8);
  copy_parameters(a.online(), b.online());
  copy_parameters(a.online(), mix.online());
  {
    torch::NoGradGuard ng;
    auto pa = a.online().named_parameters(), pb = b.online().named_parameters(), pm = mix.online().named_parameters();
    pb["out.weight"].copy_(randn({2, 16}, 9));
    pb["out.bias"].copy_(randn({2}, 10));
    pm["out.weight"].copy_(0.3 * pa["out.weight"] + 0.7 * pb["out.weight"]);
    pm["out.bias"].copy_(0.3 * pa["out.bias"] + 0.7 * pb["out.bias"]);
  }
  auto x = randn({5, 2}, 11);
  const double t = 3.0;
  const auto c = coefficients(t, kEps);
  auto fa = (a.forward(x, t) - c.c_skip * x) / c.c_out;
  auto fb = (b.forward(x, t) - c.c_skip * x) / c.c_out;
  EXPECT_TRUE(torch::allclose(mix.forward(x, t), c.c_skip * x + c.c_out * (0.3 * fa + 0.7 * fb), 1e-12, 1e-12));
}

TEST(ConsistencyModel, EmaUpdate) {
  ConsistencyModel m(spec(), kEps, 80.0, 12);
  EXPECT_TRUE(torch::equal(flatten_parameters(m.online()), flatten_parameters(m.ema())));
  randomize(m.online(), 13);
  auto before = flatten_parameters(m.ema());
  m.ema_update(1.0);
  EXPECT_TRUE(torch::equal(flatten_parameters(m.ema()), before));
  m.ema_update(0.9);
  auto theta = flatten_parameters(m.online());
  auto after = flatten_parameters(m.ema());
  EXPECT_TRUE(torch::allclose(after - theta, 0.9 * (before - theta), 1e-12, 1e-14));
  m.ema_update(0.0);
  EXPECT_TRUE(torch::equal(flatten_parameters(m.ema()), theta));
  for (const auto& p : m.ema().parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(ConsistencyModel, EmaScalar) {
  ConsistencyModel m(spec(), kEps, 80.0, 14);
  assign_flat_parameters(m.online(), torch::zeros_like(flatten_parameters(m.online())));
  assign_flat_parameters(m.ema(), torch::ones_like(flatten_parameters(m.ema())));
  m.ema_update(0.9);
  EXPECT_NEAR(flatten_parameters(m.ema())[0].item<double>(), 0.9, 1e-15);
}

TEST(ConsistencyModel, JacobianVectorProduct) {
  ConsistencyModel m(spec(), kEps, 80.0, 15);
  randomize(m.online(), 16);
  auto x = randn({3, 2}, 17);
  auto v = randn({3, 2}, 18);
  for (double t : {0.05, 2.0, 40.0}) {
    auto xv = x.clone().requires_grad_(true);
    auto g = torch::autograd::grad({(m.forward(xv, t) * v).sum()}, {xv})[0];
    torch::NoGradGuard ng;
    auto fd = fd_gradient([&](const torch::Tensor& p) { return (m.forward(p, t) * v).sum().item<double>(); }, x);
    EXPECT_LT(rel_err(g, fd), 1e-3) << "t=" << t;
  }
}
