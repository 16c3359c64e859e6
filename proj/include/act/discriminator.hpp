#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>

#include "act/augmentation.hpp"
#include "act/networks.hpp"

namespace act {

enum class DiscVariant { TimeCond, TimeBlind, Conditional };

std::string to_string(DiscVariant v);
DiscVariant parse_disc_variant(const std::string& s);

// Numerically stable log D and log(1 - D) from the logit.
inline torch::Tensor log_prob_real(const torch::Tensor& logit) { return torch::log_sigmoid(logit); }
inline torch::Tensor log_prob_fake(const torch::Tensor& logit) { return torch::log_sigmoid(-logit); }

// D(x, t) for the time-conditioned variant, D(x) for the time-blind ablation,
// and D(x0, x_t, t) for the conditional variant. The conditional input is
// concatenated with the candidate along axis 1 before the trunk.
class Discriminator {
 public:
  // `data_spec` describes the data (its input_shape is the sample shape); the
  // trunk spec is derived from it according to the variant.
  Discriminator(const BackboneSpec& data_spec, DiscVariant variant, bool aug_enabled, AugPipeline pipeline,
                std::uint64_t seed);

  DiscVariant variant() const { return variant_; }
  bool aug_enabled() const { return aug_enabled_; }
  const BackboneSpec& data_spec() const { return data_spec_; }
  const AugPipeline& pipeline() const { return pipeline_; }
  Backbone& trunk() { return *trunk_; }
  const Backbone& trunk() const { return *trunk_; }
  std::vector<torch::Tensor> parameters() const { return trunk_->parameters(); }

  torch::Tensor logit(const torch::Tensor& x, const torch::Tensor& t,
                      const std::optional<torch::Tensor>& cond = std::nullopt);
  torch::Tensor discriminate(const torch::Tensor& x, const torch::Tensor& t,
                             const std::optional<torch::Tensor>& cond = std::nullopt);

  // D(A(x, p_aug), t). For the conditional variant the candidate and the
  // condition are augmented jointly so geometric ops stay aligned.
  torch::Tensor logit_augmented(const torch::Tensor& x, const torch::Tensor& t, double p_aug, torch::Generator& gen,
                                const std::optional<torch::Tensor>& cond = std::nullopt);
  torch::Tensor discriminate_augmented(const torch::Tensor& x, const torch::Tensor& t, double p_aug,
                                       torch::Generator& gen, const std::optional<torch::Tensor>& cond = std::nullopt);

  static BackboneSpec trunk_spec_for(const BackboneSpec& data_spec, DiscVariant variant);

 private:
  torch::Tensor assemble(const torch::Tensor& x, const std::optional<torch::Tensor>& cond) const;

  BackboneSpec data_spec_;
  DiscVariant variant_;
  bool aug_enabled_;
  AugPipeline pipeline_;
  BackbonePtr trunk_;
};

}  // namespace act
