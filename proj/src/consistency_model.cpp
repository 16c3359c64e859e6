#include "act/consistency_model.hpp"

#include <cmath>
#include <string>

#include "act/errors.hpp"

namespace act {

using torch::Tensor;

SkipCoefficients coefficients(double t, double epsilon) {
  if (t < epsilon) throw DomainError("coefficients: t=" + std::to_string(t) + " below epsilon");
  const double r = t - epsilon;
  const double denom = r * r + 0.25;
  return {0.25 / denom, 0.5 * r / std::sqrt(denom), 1.0 / std::sqrt(denom)};
}

ConsistencyModel::ConsistencyModel(const BackboneSpec& spec, double epsilon, double T, std::uint64_t seed)
    : online_(make_generator(spec, seed)), ema_(make_generator(spec, seed)), epsilon_(epsilon), T_(T) {
  if (!(epsilon > 0.0 && epsilon < T)) throw DomainError("ConsistencyModel: require 0 < epsilon < T");
  copy_parameters(*online_, *ema_);
  for (auto& p : ema_->parameters()) p.set_requires_grad(false);
}

Tensor ConsistencyModel::wrap(Backbone& net, const Tensor& x_t, const Tensor& t) {
  const auto B = x_t.size(0);
  auto tt = t.to(torch::kFloat64);
  tt = tt.numel() == 1 ? tt.reshape({1}).expand({B}) : tt;
  if (tt.dim() != 1 || tt.size(0) != B) throw ShapeError("consistency_forward: t must be scalar or [B]");
  if (B > 0) {
    const double lo = tt.min().item<double>();
    const double hi = tt.max().item<double>();
    if (lo < epsilon_ || hi > T_) {
      throw DomainError("consistency_forward: t outside [epsilon, T] (got [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "])");
    }
  }
  std::vector<std::int64_t> bshape(static_cast<std::size_t>(x_t.dim()), 1);
  bshape[0] = B;
  const auto r = (tt - epsilon_).reshape(bshape);
  const auto denom = r * r + 0.25;
  const auto c_skip = 0.25 / denom;
  const auto c_out = 0.5 * r / torch::sqrt(denom);
  const auto c_in = 1.0 / torch::sqrt(denom);
  return c_skip * x_t + c_out * net.forward(c_in * x_t, tt);
}

Tensor ConsistencyModel::forward(const Tensor& x_t, const Tensor& t, ParamSet which) {
  return wrap(which == ParamSet::Online ? *online_ : *ema_, x_t, t);
}

Tensor ConsistencyModel::forward(const Tensor& x_t, double t, ParamSet which) {
  return forward(x_t, torch::full({1}, t, torch::kFloat64), which);
}

void ConsistencyModel::ema_update(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw DomainError("ema_update: mu outside [0, 1]");
  torch::NoGradGuard no_grad;
  auto target = ema_->parameters();
  auto source = online_->parameters();
  if (target.size() != source.size()) throw std::logic_error("ema_update: parameter sets differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].sizes() != source[i].sizes()) throw std::logic_error("ema_update: parameter shape mismatch");
    target[i].mul_(mu).add_(source[i], 1.0 - mu);
  }
}

double ConsistencyModel::boundary_residual(const Tensor& probe) {
  torch::NoGradGuard no_grad;
  auto out = forward(probe, epsilon_, ParamSet::Online);
  return (out - probe).abs().max().item<double>();
}

}  // namespace act
