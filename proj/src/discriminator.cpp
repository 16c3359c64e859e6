#include "act/discriminator.hpp"

#include "act/errors.hpp"

namespace act {

using torch::Tensor;

std::string to_string(DiscVariant v) {
  switch (v) {
    case DiscVariant::TimeCond: return "time_cond";
    case DiscVariant::TimeBlind: return "time_blind";
    case DiscVariant::Conditional: return "conditional";
  }
  return "time_cond";
}

DiscVariant parse_disc_variant(const std::string& s) {
  if (s == "time_cond") return DiscVariant::TimeCond;
  if (s == "time_blind") return DiscVariant::TimeBlind;
  if (s == "conditional") return DiscVariant::Conditional;
  throw std::invalid_argument("unknown discriminator variant '" + s + "' (expected time_cond|time_blind|conditional)");
}

BackboneSpec Discriminator::trunk_spec_for(const BackboneSpec& data_spec, DiscVariant variant) {
  BackboneSpec spec = data_spec;
  spec.time_embedding = variant != DiscVariant::TimeBlind;
  if (variant == DiscVariant::Conditional) spec.input_shape[0] *= 2;
  return spec;
}

Discriminator::Discriminator(const BackboneSpec& data_spec, DiscVariant variant, bool aug_enabled,
                             AugPipeline pipeline, std::uint64_t seed)
    : data_spec_(data_spec),
      variant_(variant),
      aug_enabled_(aug_enabled),
      pipeline_(std::move(pipeline)),
      trunk_(make_trunk(trunk_spec_for(data_spec, variant), seed)) {}

Tensor Discriminator::assemble(const Tensor& x, const std::optional<Tensor>& cond) const {
  const bool wants_cond = variant_ == DiscVariant::Conditional;
  if (wants_cond != cond.has_value()) {
    throw UsageError(wants_cond ? "conditional discriminator requires the x_t condition"
                                : "condition passed to a non-conditional discriminator");
  }
  if (!wants_cond) return x;
  if (cond->sizes() != x.sizes()) throw ShapeError("discriminator: condition shape differs from candidate");
  return torch::cat({x, *cond}, 1);
}

Tensor Discriminator::logit(const Tensor& x, const Tensor& t, const std::optional<Tensor>& cond) {
  return trunk_->forward(assemble(x, cond), t);
}

Tensor Discriminator::discriminate(const Tensor& x, const Tensor& t, const std::optional<Tensor>& cond) {
  return torch::sigmoid(logit(x, t, cond));
}

Tensor Discriminator::logit_augmented(const Tensor& x, const Tensor& t, double p_aug, torch::Generator& gen,
                                      const std::optional<Tensor>& cond) {
  if (!(p_aug >= 0.0 && p_aug <= 1.0)) throw DomainError("discriminate_augmented: p_aug outside [0, 1]");
  return trunk_->forward(pipeline_.apply(assemble(x, cond), p_aug, gen), t);
}

Tensor Discriminator::discriminate_augmented(const Tensor& x, const Tensor& t, double p_aug, torch::Generator& gen,
                                             const std::optional<Tensor>& cond) {
  return torch::sigmoid(logit_augmented(x, t, p_aug, gen, cond));
}

}  // namespace act
