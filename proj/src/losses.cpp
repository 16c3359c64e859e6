#include "act/losses.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "act/errors.hpp"

namespace act {

using torch::Tensor;

std::string to_string(DistanceKind d) { return d == DistanceKind::SquaredL2 ? "l2" : "pseudo_huber"; }

DistanceKind parse_distance(const std::string& s) {
  if (s == "l2" || s == "squared_l2") return DistanceKind::SquaredL2;
  if (s == "pseudo_huber" || s == "huber") return DistanceKind::PseudoHuber;
  throw std::invalid_argument("unknown distance '" + s + "' (expected l2|pseudo_huber)");
}

LossCounters& loss_counters() {
  static LossCounters counters;
  return counters;
}

Tensor sample_distance(const Tensor& a, const Tensor& b, DistanceKind kind) {
  if (a.sizes() != b.sizes()) throw ShapeError("sample_distance: shape mismatch");
  auto sq = (a - b).pow(2).flatten(1).sum(1);
  if (kind == DistanceKind::SquaredL2) return sq;
  const double c = 0.03 * std::sqrt(static_cast<double>(a[0].numel()));
  return torch::sqrt(sq + c * c) - c;
}

namespace {

Tensor time_tensor(double t) { return torch::full({1}, t, torch::kFloat64); }

Tensor disc_logit(Discriminator& disc, const Tensor& x, double t, const std::optional<Tensor>& cond,
                  const AugContext& aug) {
  if (disc.aug_enabled() && aug.p_aug > 0.0) {
    if (aug.gen == nullptr) throw UsageError("augmented discriminator call without a generator");
    return disc.logit_augmented(x, time_tensor(t), aug.p_aug, *aug.gen, cond);
  }
  return disc.logit(x, time_tensor(t), cond);
}

}  // namespace

Tensor consistency_loss_from(const Tensor& online_out, ConsistencyModel& model, const Tensor& x0, const Tensor& z,
                             double t_lo, DistanceKind kind) {
  Tensor target;
  {
    torch::NoGradGuard no_grad;
    target = model.forward(x0 + t_lo * z, t_lo, ParamSet::Ema);
  }
  if (online_out.requires_grad()) ++loss_counters().ct_backward;
  return sample_distance(online_out, target, kind).mean();
}

Tensor consistency_loss(ConsistencyModel& model, const Tensor& x0, const Tensor& z, double t_hi, double t_lo,
                        DistanceKind kind) {
  if (t_lo > t_hi) throw UsageError("consistency_loss: require t_lo <= t_hi");
  if (x0.sizes() != z.sizes()) throw ShapeError("consistency_loss: z must be shaped like x0");
  auto online = model.forward(x0 + t_hi * z, t_hi, ParamSet::Online);
  return consistency_loss_from(online, model, x0, z, t_lo, kind);
}

Tensor generator_adv_loss_from(Discriminator& disc, const Tensor& generated, double t_hi,
                               const std::optional<Tensor>& cond, const AugContext& aug) {
  return log_prob_fake(disc_logit(disc, generated, t_hi, cond, aug)).mean();
}

Tensor generator_adv_loss(ConsistencyModel& model, Discriminator& disc, const Tensor& x0, const Tensor& z,
                          double t_hi, const AugContext& aug) {
  if (x0.sizes() != z.sizes()) throw ShapeError("generator_adv_loss: z must be shaped like x0");
  auto x_t = x0 + t_hi * z;
  auto generated = model.forward(x_t, t_hi, ParamSet::Online);
  std::optional<Tensor> cond;
  if (disc.variant() == DiscVariant::Conditional) cond = x_t;
  return generator_adv_loss_from(disc, generated, t_hi, cond, aug);
}

Tensor discriminator_loss(Discriminator& disc, const Tensor& x_real, const Tensor& x_gen_detached, double t_hi,
                          const std::optional<Tensor>& cond_real, const std::optional<Tensor>& cond_fake,
                          const AugContext& aug) {
  if (x_gen_detached.requires_grad()) {
    throw UsageError("discriminator_loss: generated batch must be detached from the generator");
  }
  auto real_term = -log_prob_real(disc_logit(disc, x_real, t_hi, cond_real, aug));
  auto fake_term = -log_prob_fake(disc_logit(disc, x_gen_detached, t_hi, cond_fake, aug));
  return (real_term + fake_term).mean();
}

Tensor gradient_penalty(const std::function<Tensor(const Tensor&)>& prob_fn, const Tensor& x, double w_gp) {
  auto xv = x.detach().requires_grad_(true);
  auto prob = prob_fn(xv);
  if (!prob.requires_grad()) return torch::zeros({}, x.options());
  auto grads = torch::autograd::grad({prob.sum()}, {xv}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                     /*create_graph=*/true, /*allow_unused=*/true);
  ++loss_counters().second_order;
  if (!grads[0].defined()) return torch::zeros({}, x.options());
  return w_gp * grads[0].pow(2).flatten(1).sum(1).mean();
}

Tensor gradient_penalty(Discriminator& disc, const Tensor& x_real, double t_hi, double w_gp, bool on_schedule,
                        const std::optional<Tensor>& cond, const AugContext& aug) {
  if (!on_schedule) return torch::zeros({}, x_real.options());
  if (disc.aug_enabled() && !disc.pipeline().differentiable()) {
    throw ConfigError("augment", "gradient penalty: augmentation pipeline contains a non-differentiable op");
  }
  return gradient_penalty(
      [&](const Tensor& xv) { return torch::sigmoid(disc_logit(disc, xv, t_hi, cond, aug)); }, x_real, w_gp);
}

std::string LossReport::csv_header() { return "k,n,t_hi,l_ct,l_g,l_f,l_d,l_gp,lambda,p_aug"; }

std::string LossReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(k), static_cast<long long>(n_index), t_pair.first, l_ct, l_g, l_f, l_d, l_gp,
                lambda_used, p_aug);
  return buf;
}

}  // namespace act
