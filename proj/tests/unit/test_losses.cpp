#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "act/discriminator.hpp"
#include "act/errors.hpp"
#include "act/losses.hpp"
#include "act/metrics_lab.hpp"
#include "oracles.hpp"

using namespace act;
using act::testing::fd_gradient;
using act::testing::fd_parameter_gradient;
using act::testing::rel_err;

namespace {

constexpr double kEps = 0.002;

BackboneSpec spec() {
  BackboneSpec s;
  s.widths = {12, 12};
  s.time_embed_dim = 8;
  return s;
}

torch::Tensor randn(std::vector<std::int64_t> shape, std::uint64_t seed, double scale = 1.0) {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  return scale * torch::randn(shape, gen, torch::kFloat64);
}

void randomize(torch::nn::Module& m, std::uint64_t seed, double scale = 0.4) {
  auto flat = flatten_parameters(m);
  assign_flat_parameters(m, randn(flat.sizes().vec(), seed, scale));
}

// Analytic gradient of `loss` w.r.t. the first `n` entries of every parameter,
// concatenated, and the matching central-difference oracle.
std::pair<torch::Tensor, torch::Tensor> grads(torch::nn::Module& owner, const std::function<torch::Tensor()>& loss,
                                              std::int64_t n = 24) {
  auto params = owner.parameters();
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  auto l = loss();
  auto g = torch::autograd::grad({l}, params, {}, false, false, true);
  std::vector<torch::Tensor> analytic, numeric;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto m = std::min<std::int64_t>(n, params[i].numel());
    auto gi = g[i].defined() ? g[i].reshape({-1}).slice(0, 0, m) : torch::zeros({m}, torch::kFloat64);
    analytic.push_back(gi);
    numeric.push_back(fd_parameter_gradient([&] { return loss().item<double>(); }, params[i], 1e-4, m));
  }
  return {torch::cat(analytic), torch::cat(numeric)};
}

struct Draw {
  ConsistencyModel model{spec(), kEps, 80.0, 1};
  Discriminator disc{spec(), DiscVariant::TimeCond, false, AugPipeline{}, 2};
  explicit Draw(std::uint64_t draw) {
    randomize(model.online(), 100 + draw);
    randomize(model.ema(), 200 + draw);
    randomize(disc.trunk(), 300 + draw);
  }
};

}  // namespace

TEST(ConsistencyLoss, IdenticalArgumentsGiveZero) {
  Draw s(0);
  copy_parameters(s.model.online(), s.model.ema());
  auto x0 = randn({4, 2}, 1), z = randn({4, 2}, 2);
  EXPECT_EQ(consistency_loss(s.model, x0, z, 3.0, 3.0).item<double>(), 0.0);
}

TEST(ConsistencyLoss, BoundaryTarget) {
  Draw s(1);
  auto x0 = randn({4, 2}, 3), z = randn({4, 2}, 4);
  auto online = s.model.forward(x0 + 2.0 * z, 2.0);
  auto expected = (online - (x0 + kEps * z)).pow(2).sum(1).mean();
  EXPECT_NEAR(consistency_loss(s.model, x0, z, 2.0, kEps).item<double>(), expected.item<double>(), 1e-14);
}

TEST(ConsistencyLoss, HandComputedTwoSampleBatch) {
  // Zero backbones: f = c_skip(t) x_t on both branches.
  ConsistencyModel m(spec(), kEps, 80.0, 5);
  auto x0 = torch::tensor({{1.0, 0.0}, {0.0, 2.0}}, torch::kFloat64);
  auto z = torch::tensor({{0.5, -1.0}, {1.0, 1.0}}, torch::kFloat64);
  const double hi = 1.0, lo = 0.5;
  const double a = coefficients(hi, kEps).c_skip, b = coefficients(lo, kEps).c_skip;
  double total = 0.0;
  const double xs[2][2] = {{1.0, 0.0}, {0.0, 2.0}}, zs[2][2] = {{0.5, -1.0}, {1.0, 1.0}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double d = a * (xs[i][j] + hi * zs[i][j]) - b * (xs[i][j] + lo * zs[i][j]);
      total += d * d;
    }
  EXPECT_NEAR(consistency_loss(m, x0, z, hi, lo).item<double>(), total / 2.0, 1e-14);
}

TEST(ConsistencyLoss, TargetBranchIsGradientFree) {
  Draw s(2);
  auto x0 = randn({6, 2}, 5), z = randn({6, 2}, 6);
  auto l = consistency_loss(s.model, x0, z, 5.0, 3.0);
  auto ema_params = s.model.ema().parameters();
  for (const auto& p : ema_params) EXPECT_FALSE(p.requires_grad());
  const double before = l.item<double>();
  randomize(s.model.ema(), 999);
  EXPECT_NE(consistency_loss(s.model, x0, z, 5.0, 3.0).item<double>(), before);
}

TEST(ConsistencyLoss, OrderingViolation) {
  Draw s(3);
  EXPECT_THROW(consistency_loss(s.model, randn({2, 2}, 1), randn({2, 2}, 2), 1.0, 2.0), UsageError);
}

TEST(ConsistencyLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    Draw s(draw);
    auto x0 = randn({5, 2}, 10 + draw), z = randn({5, 2}, 20 + draw);
    for (auto kind : {DistanceKind::SquaredL2, DistanceKind::PseudoHuber}) {
      auto [a, n] = grads(s.model.online(), [&] { return consistency_loss(s.model, x0, z, 4.0, 2.5, kind); });
      EXPECT_LT(rel_err(a, n), 1e-3) << "draw " << draw << " " << to_string(kind);
    }
  }
}

TEST(GeneratorLoss, ZeroDiscriminator) {
  Draw s(4);
  zero_head(s.disc.trunk());
  auto l = generator_adv_loss(s.model, s.disc, randn({8, 2}, 1), randn({8, 2}, 2), 3.0);
  EXPECT_NEAR(l.item<double>(), std::log(0.5), 1e-15);
}

TEST(GeneratorLoss, FixedLogit) {
  Draw s(5);
  zero_head(s.disc.trunk());
  {
    torch::NoGradGuard ng;
    s.disc.trunk().named_parameters()["head.bias"].fill_(2.0);
  }
  auto l = generator_adv_loss(s.model, s.disc, randn({8, 2}, 1), randn({8, 2}, 2), 3.0);
  EXPECT_NEAR(l.item<double>(), std::log1p(-1.0 / (1.0 + std::exp(-2.0))), 1e-13);
  EXPECT_NEAR(l.item<double>(), -2.1269, 5e-5);
  // Fake-certain discriminator: loss tends to 0 from below.
  {
    torch::NoGradGuard ng;
    s.disc.trunk().named_parameters()["head.bias"].fill_(-40.0);
  }
  auto sat = generator_adv_loss(s.model, s.disc, randn({8, 2}, 1), randn({8, 2}, 2), 3.0).item<double>();
  EXPECT_LT(sat, 0.0);
  EXPECT_GT(sat, -1e-15);
}

TEST(GeneratorLoss, GradientFlowsIntoGeneratorOnly) {
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    Draw s(draw);
    auto x0 = randn({5, 2}, 30 + draw), z = randn({5, 2}, 40 + draw);
    auto [a, n] = grads(s.model.online(), [&] { return generator_adv_loss(s.model, s.disc, x0, z, 1.5); });
    EXPECT_LT(rel_err(a, n), 1e-3) << "draw " << draw;
  }
}

TEST(DiscriminatorLoss, ClosedForms) {
  Draw s(6);
  zero_head(s.disc.trunk());
  auto xr = randn({8, 2}, 1), xg = randn({8, 2}, 2);
  EXPECT_NEAR(discriminator_loss(s.disc, xr, xg, 1.0).item<double>(), -2.0 * std::log(0.5), 1e-15);
  // Logit +1 on real and -1 on fake: the time-blind trunk with only a head bias
  // cannot separate, so evaluate the formula on stable log-probabilities.
  auto real = -log_prob_real(torch::ones({3}, torch::kFloat64));
  auto fake = -log_prob_fake(-torch::ones({3}, torch::kFloat64));
  EXPECT_NEAR((real + fake).mean().item<double>(), 2.0 * std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR((real + fake).mean().item<double>(), 0.6265, 5e-5);
  auto perfect = (-log_prob_real(torch::full({3}, 30.0, torch::kFloat64)) -
                  log_prob_fake(torch::full({3}, -30.0, torch::kFloat64)))
                     .mean()
                     .item<double>();
  EXPECT_LT(perfect, 1e-12);
}

TEST(DiscriminatorLoss, RejectsAttachedGeneratedBatch) {
  Draw s(7);
  auto gen = s.model.forward(randn({4, 2}, 1), 2.0);
  ASSERT_TRUE(gen.requires_grad());
  EXPECT_THROW(discriminator_loss(s.disc, randn({4, 2}, 2), gen, 2.0), UsageError);
}

TEST(DiscriminatorLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    Draw s(draw);
    auto xr = randn({6, 2}, 50 + draw), xg = randn({6, 2}, 60 + draw);
    auto [a, n] = grads(s.disc.trunk(), [&] { return discriminator_loss(s.disc, xr, xg, 0.8); });
    EXPECT_LT(rel_err(a, n), 1e-3) << "draw " << draw;
  }
}

TEST(GradientPenalty, TestDoubles) {
  auto x = randn({5, 2}, 1);
  auto constant = [](const torch::Tensor& v) { return torch::zeros({v.size(0)}, torch::kFloat64) + 0.3; };
  EXPECT_EQ(gradient_penalty(constant, x, 10.0).item<double>(), 0.0);
  auto first = [](const torch::Tensor& v) { return v.select(1, 0); };
  EXPECT_NEAR(gradient_penalty(first, x, 10.0).item<double>(), 10.0, 1e-14);
}

TEST(GradientPenalty, MatchesFiniteDifferenceNorm) {
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    Draw s(draw);
    auto x = randn({4, 2}, 70 + draw);
    const double t = 1.3;
    auto value = gradient_penalty(s.disc, x, t, 10.0, true).item<double>();
    torch::NoGradGuard ng;
    double expected = 0.0;
    for (int b = 0; b < 4; ++b) {
      auto row = x[b].unsqueeze(0);
      auto g = fd_gradient(
          [&](const torch::Tensor& p) {
            return s.disc.discriminate(p, torch::full({1}, t, torch::kFloat64)).sum().item<double>();
          },
          row);
      expected += g.pow(2).sum().item<double>();
    }
    expected = 10.0 * expected / 4.0;
    EXPECT_LT(std::abs(value - expected) / expected, 1e-3) << "draw " << draw;
  }
}

TEST(GradientPenalty, ParameterGradientMatchesFiniteDifferences) {
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    Draw s(draw);
    auto x = randn({4, 2}, 80 + draw);
    auto [a, n] = grads(s.disc.trunk(), [&] { return gradient_penalty(s.disc, x, 2.0, 10.0, true); }, 16);
    EXPECT_LT(rel_err(a, n), 1e-3) << "draw " << draw;
  }
}

TEST(GradientPenalty, OffScheduleBuildsNothing) {
  Draw s(8);
  const auto before = loss_counters().second_order.load();
  auto v = gradient_penalty(s.disc, randn({4, 2}, 1), 2.0, 10.0, false);
  EXPECT_EQ(v.item<double>(), 0.0);
  EXPECT_FALSE(v.requires_grad());
  EXPECT_EQ(loss_counters().second_order.load(), before);
  gradient_penalty(s.disc, randn({4, 2}, 1), 2.0, 10.0, true);
  EXPECT_EQ(loss_counters().second_order.load(), before + 1);
}

TEST(GradientPenalty, NonDifferentiableAugmentation) {
  AugPipeline p;
  p.add({"quantize", [](const torch::Tensor& x, const torch::Tensor&, torch::Generator&) { return x.round(); },
         false});
  Discriminator d(spec(), DiscVariant::TimeCond, true, p, 3);
  EXPECT_THROW(gradient_penalty(d, randn({4, 2}, 1), 1.0, 10.0, true), ConfigError);
}

TEST(Combine, Limits) {
  auto cf = combine(1.0, -0.5, 1.2, 0.4, 0.0);
  EXPECT_EQ(cf.l_f, 1.0);
  EXPECT_EQ(cf.l_d_total, 0.0);
  auto pure = combine(1.0, -0.5, 1.2, 0.4, 1.0);
  EXPECT_EQ(pure.l_f, -0.5);
  EXPECT_DOUBLE_EQ(pure.l_d_total, 1.6);
  EXPECT_NEAR(combine(1.0, -0.5, 0.0, 0.0, 0.3).l_f, 0.55, 1e-15);
}

TEST(Combine, Linear) {
  const double lam = 0.37;
  auto a = combine(0.2, 0.9, 1.1, 0.3, lam), b = combine(1.7, -0.4, 0.6, 0.8, lam);
  auto s = combine(0.2 + 1.7, 0.9 - 0.4, 1.1 + 0.6, 0.3 + 0.8, lam);
  EXPECT_NEAR(s.l_f, a.l_f + b.l_f, 1e-14);
  EXPECT_NEAR(s.l_d_total, a.l_d_total + b.l_d_total, 1e-14);
}

TEST(Losses, FiniteForBoundedInputs) {
  Draw s(9);
  {
    torch::NoGradGuard ng;
    s.disc.trunk().named_parameters()["head.bias"].fill_(50.0);
  }
  auto x = randn({16, 2}, 1, 10.0).clamp(-10, 10), z = randn({16, 2}, 2);
  EXPECT_TRUE(std::isfinite(consistency_loss(s.model, x, z, 80.0, 40.0).item<double>()));
  EXPECT_TRUE(std::isfinite(generator_adv_loss(s.model, s.disc, x, z, 80.0).item<double>()));
  EXPECT_TRUE(std::isfinite(discriminator_loss(s.disc, x, x, 80.0).item<double>()));
  EXPECT_TRUE(std::isfinite(gradient_penalty(s.disc, x, 80.0, 10.0, true).item<double>()));
}

TEST(Losses, StableLogProbabilities) {
  for (double l : {-50.0, -20.0, -1.0, 0.0, 3.0, 20.0, 50.0}) {
    auto t = torch::tensor({l}, torch::kFloat64);
    // log sigma(l) = -log1p(exp(-l)), log(1 - sigma(l)) = -log1p(exp(l)), evaluated on the safe side.
    const double ref_real = l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l));
    const double ref_fake = l <= 0 ? -std::log1p(std::exp(l)) : -l - std::log1p(std::exp(-l));
    EXPECT_NEAR(log_prob_real(t).item<double>(), ref_real, 1e-9);
    EXPECT_NEAR(log_prob_fake(t).item<double>(), ref_fake, 1e-9);
  }
}

TEST(Losses, OptimalDiscriminatorValueMatchesJsd) {
  // Two atoms with real weights (0.7, 0.3) and fake weights (0.2, 0.8).
  const double p[2] = {0.7, 0.3}, q[2] = {0.2, 0.8};
  std::vector<double> real, fake;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < static_cast<int>(std::lround(p[i] * 1000)); ++j) real.push_back(i);
    for (int j = 0; j < static_cast<int>(std::lround(q[i] * 1000)); ++j) fake.push_back(i);
  }
  auto atom_logit = [&](const torch::Tensor& x) {
    auto l0 = std::log(p[0] / q[0]), l1 = std::log(p[1] / q[1]);
    return torch::where(x < 0.5, torch::full_like(x, l0), torch::full_like(x, l1));
  };
  auto r = torch::tensor(real, torch::kFloat64), f = torch::tensor(fake, torch::kFloat64);
  const double l_d = (-log_prob_real(atom_logit(r))).mean().item<double>() +
                     (-log_prob_fake(atom_logit(f))).mean().item<double>();
  auto grid = HistogramGrid::uniform(1, -0.5, 1.5, 2);
  const double jsd = js_divergence(r.unsqueeze(1), f.unsqueeze(1), grid);
  EXPECT_NEAR(l_d, 2.0 * std::numbers::ln2 - 2.0 * jsd, 1e-9);
}
