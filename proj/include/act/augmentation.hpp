#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace act {

// One augmentation op. `fire` is a bool [B] mask; rows with fire=false must be
// returned bit-identical. Every op is expected to be differentiable in x.
struct AugOp {
  using Fn = std::function<torch::Tensor(const torch::Tensor& x, const torch::Tensor& fire, torch::Generator& gen)>;
  std::string name;
  Fn fn;
  bool differentiable = true;
};

// A(x, p_aug): each op fires independently per sample with probability p_aug.
//
// Image ops act on [B, C, H, W]; point ops act on [B, 2m] (m stacked 2-D points).
class AugPipeline {
 public:
  AugPipeline() = default;

  static AugPipeline flip_only();
  // flip, integer translation (<= 12.5% of width, reflected padding), cutout.
  static AugPipeline image_default();
  // random 90-degree rotations and Gaussian coordinate jitter.
  static AugPipeline points_default(double jitter_sigma = 0.05);
  static AugPipeline from_names(const std::vector<std::string>& names);

  AugPipeline& add(AugOp op);
  bool empty() const { return ops_.empty(); }
  bool differentiable() const;
  std::vector<std::string> names() const;

  torch::Tensor apply(const torch::Tensor& x, double p_aug, torch::Generator& gen) const;

 private:
  std::vector<AugOp> ops_;
};

// Individual ops, exposed for tests.
torch::Tensor horizontal_flip(const torch::Tensor& x);
AugOp make_flip();
AugOp make_translate(double max_fraction = 0.125);
AugOp make_cutout(double size_fraction = 0.5);
AugOp make_rotate90();
AugOp make_jitter(double sigma);

// Gradient-penalty driven controller for p_aug.
struct AugController {
  double p_aug = 0.0;
  double l_gp_ema = 0.55;
  double tau = 0.55;
  double p_r = 0.05;
  double mu_p = 0.93;
  std::int64_t update_interval = 16;

  static AugController with_threshold(double tau, double p_r, double mu_p, std::int64_t interval);

  // p_aug moves by +-p_r according to [l_gp_ema >= tau] (the EMA *before* this
  // observation), then the EMA absorbs the observation.
  double step(double l_gp_observed);
};

}  // namespace act
