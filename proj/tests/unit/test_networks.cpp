#include <gtest/gtest.h>

#include "act/errors.hpp"
#include "act/networks.hpp"
#include "oracles.hpp"

using namespace act;
using act::testing::fd_gradient;
using act::testing::rel_err;

namespace {

BackboneSpec mlp_spec() {
  BackboneSpec s;
  s.widths = {16, 16};
  s.input_shape = {2};
  s.time_embed_dim = 8;
  return s;
}

BackboneSpec unet_spec() {
  BackboneSpec s;
  s.kind = BackboneKind::UnetSmall;
  s.widths = {8, 16};
  s.input_shape = {3, 8, 8};
  s.layers_per_block = 1;
  s.time_embed_dim = 8;
  return s;
}

void randomize(torch::nn::Module& m, std::uint64_t seed, double scale = 0.3) {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  auto flat = flatten_parameters(m);
  assign_flat_parameters(m, scale * torch::randn(flat.sizes(), gen, torch::kFloat64));
}

torch::Tensor randn(std::vector<std::int64_t> shape, std::uint64_t seed) {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  return torch::randn(shape, gen, torch::kFloat64);
}

}  // namespace

TEST(Generator, ZeroInitOutputsZero) {
  for (const auto& spec : {mlp_spec(), unet_spec()}) {
    auto g = make_generator(spec, 1);
    auto shape = spec.input_shape;
    shape.insert(shape.begin(), 4);
    auto x = randn(shape, 2);
    auto out = g->forward(x, torch::full({4}, 1.5, torch::kFloat64));
    EXPECT_EQ(out.sizes(), x.sizes());
    EXPECT_EQ(out.abs().max().item<double>(), 0.0);
  }
}

TEST(Generator, Deterministic) {
  auto g = make_generator(mlp_spec(), 3);
  randomize(*g, 4);
  auto x = randn({5, 2}, 5);
  auto t = torch::full({5}, 0.7, torch::kFloat64);
  EXPECT_TRUE(torch::equal(g->forward(x, t), g->forward(x, t)));
  auto g2 = make_generator(mlp_spec(), 3);
  EXPECT_TRUE(torch::equal(flatten_parameters(*make_generator(mlp_spec(), 3)), flatten_parameters(*g2)));
}

TEST(Generator, InputGradientMatchesFiniteDifferences) {
  for (const auto& spec : {mlp_spec(), unet_spec()}) {
    auto g = make_generator(spec, 7);
    randomize(*g, 8, 0.2);
    auto shape = spec.input_shape;
    shape.insert(shape.begin(), 2);
    auto x = randn(shape, 9);
    auto w = randn(shape, 10);
    auto t = torch::tensor({0.3, 4.0}, torch::kFloat64);
    auto functional = [&](const torch::Tensor& xv) { return (g->forward(xv, t) * w).sum(); };
    auto xv = x.clone().requires_grad_(true);
    auto analytic = torch::autograd::grad({functional(xv)}, {xv})[0];
    torch::NoGradGuard ng;
    auto numeric = fd_gradient([&](const torch::Tensor& p) { return functional(p).item<double>(); }, x);
    EXPECT_LT(rel_err(analytic, numeric), 1e-3) << to_string(spec.kind);
  }
}

TEST(Generator, ShapeMismatch) {
  auto g = make_generator(mlp_spec(), 1);
  EXPECT_THROW(g->forward(randn({4, 3}, 1), torch::full({4}, 1.0, torch::kFloat64)), ShapeError);
}

TEST(Trunk, ZeroHeadGivesHalf) {
  for (const auto& spec : {mlp_spec(), unet_spec()}) {
    auto d = make_trunk(spec, 11);
    zero_head(*d);
    auto shape = spec.input_shape;
    shape.insert(shape.begin(), 3);
    auto logit = d->forward(randn(shape, 12), torch::full({3}, 2.0, torch::kFloat64));
    ASSERT_EQ(logit.sizes(), (std::vector<std::int64_t>{3}));
    EXPECT_EQ(logit.abs().max().item<double>(), 0.0);
    EXPECT_EQ(torch::sigmoid(logit).min().item<double>(), 0.5);
  }
}

TEST(Trunk, TimeEmbeddingDisabledIgnoresTime) {
  auto spec = mlp_spec();
  spec.time_embedding = false;
  auto d = make_trunk(spec, 13);
  randomize(*d, 14);
  auto x = randn({6, 2}, 15);
  auto a = d->forward(x, torch::full({6}, 1.0, torch::kFloat64));
  auto b = d->forward(x, torch::full({6}, 79.0, torch::kFloat64));
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(Trunk, InputGradientMatchesFiniteDifferences) {
  for (const auto& spec : {mlp_spec(), unet_spec()}) {
    auto d = make_trunk(spec, 16);
    randomize(*d, 17, 0.2);
    auto shape = spec.input_shape;
    shape.insert(shape.begin(), 2);
    auto x = randn(shape, 18);
    auto t = torch::tensor({0.01, 20.0}, torch::kFloat64);
    auto xv = x.clone().requires_grad_(true);
    auto analytic = torch::autograd::grad({d->forward(xv, t).sum()}, {xv})[0];
    torch::NoGradGuard ng;
    auto numeric = fd_gradient([&](const torch::Tensor& p) { return d->forward(p, t).sum().item<double>(); }, x);
    EXPECT_LT(rel_err(analytic, numeric), 1e-3) << to_string(spec.kind);
  }
}

TEST(Backbone, ParameterCountsAreFrozen) {
  // in_proj 48, time mlp 144 + 272, two (fc + tproj) pairs 4 x 272, out 34
  EXPECT_EQ(parameter_count(*make_generator(mlp_spec(), 0)), 1586);
  // time mlp 416, conv_in 224, res(8,8) 1336, down 584, res(8,16) 3952,
  // mid res 2 x 4976, attention 1120, norm_out 32, head 17
  EXPECT_EQ(parameter_count(*make_trunk(unet_spec(), 0)), 17633);
  // Pure function of the spec.
  EXPECT_EQ(parameter_count(*make_generator(mlp_spec(), 0)), parameter_count(*make_generator(mlp_spec(), 99)));
}

TEST(Activation, PointwiseMaps) {
  auto x = torch::tensor({-3.0, -0.5, 0.0, 0.25, 2.0}, torch::kFloat64);
  auto silu = apply_activation(Activation::SiLU, x);
  auto leaky = apply_activation(Activation::LeakyReLU, x);
  for (int i = 0; i < 5; ++i) {
    const double v = x[i].item<double>();
    EXPECT_NEAR(silu[i].item<double>(), v / (1.0 + std::exp(-v)), 1e-15);
    EXPECT_DOUBLE_EQ(leaky[i].item<double>(), v >= 0 ? v : 0.2 * v);
  }
}

TEST(TimeEmbedding, DistinctOnGrid) {
  TimeEmbedding emb(16);
  auto t = torch::tensor({0.002, 0.0021, 1.0, 1.0001, 80.0}, torch::kFloat64);
  auto e = emb(t);
  ASSERT_EQ(e.sizes(), (std::vector<std::int64_t>{5, 16}));
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) EXPECT_GT((e[i] - e[j]).abs().max().item<double>(), 1e-6);
  EXPECT_TRUE(torch::equal(emb(t), e));
}

TEST(BackboneSpec, SerializeRoundTrip) {
  for (const auto& spec : {mlp_spec(), unet_spec()}) {
    EXPECT_EQ(BackboneSpec::deserialize(spec.serialize()), spec);
  }
}

TEST(FlatParameters, RoundTrip) {
  auto g = make_generator(mlp_spec(), 21);
  randomize(*g, 22);
  auto flat = flatten_parameters(*g);
  auto h = make_generator(mlp_spec(), 23);
  assign_flat_parameters(*h, flat);
  EXPECT_TRUE(torch::equal(flatten_parameters(*h), flat));
  EXPECT_THROW(assign_flat_parameters(*h, flat.slice(0, 1)), ShapeError);
}
