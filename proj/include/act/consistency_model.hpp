#pragma once

#include <torch/torch.h>

#include "act/networks.hpp"

namespace act {

struct SkipCoefficients {
  double c_skip;
  double c_out;
  double c_in;
};

enum class ParamSet { Online, Ema };

/// Boundary-respecting parameterization with r = t - epsilon:
///   c_skip = 0.25 / (r^2 + 0.25), c_out = 0.5 r / sqrt(0.25 + r^2),
///   c_in = 1 / sqrt(r^2 + 0.25).
SkipCoefficients coefficients(double t, double epsilon);

// f(x_t, t) = c_skip(t) x_t + c_out(t) F(c_in(t) x_t, t), holding an online
// backbone (theta_g) and its EMA copy (theta_g^-). The EMA copy never
// requires grad and is written only through ema_update().
class ConsistencyModel {
 public:
  ConsistencyModel(const BackboneSpec& spec, double epsilon, double T, std::uint64_t seed);

  const BackboneSpec& spec() const { return online_->spec(); }
  double epsilon() const { return epsilon_; }
  double T() const { return T_; }

  Backbone& online() { return *online_; }
  const Backbone& online() const { return *online_; }
  Backbone& ema() { return *ema_; }
  const Backbone& ema() const { return *ema_; }
  BackbonePtr online_ptr() const { return online_; }

  // t is a scalar or a per-sample [B] tensor; every entry must lie in [eps, T].
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, ParamSet which = ParamSet::Online);
  torch::Tensor forward(const torch::Tensor& x_t, double t, ParamSet which = ParamSet::Online);

  // theta^- <- mu theta^- + (1 - mu) theta, without autograd.
  void ema_update(double mu);

  // max |f(x, eps) - x| over a probe batch; exactly 0 for finite weights.
  double boundary_residual(const torch::Tensor& probe);

 private:
  torch::Tensor wrap(Backbone& net, const torch::Tensor& x_t, const torch::Tensor& t);

  BackbonePtr online_;
  BackbonePtr ema_;
  double epsilon_;
  double T_;
};

}  // namespace act
