#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "act/consistency_model.hpp"
#include "act/discriminator.hpp"

namespace act {

enum class DistanceKind { SquaredL2, PseudoHuber };

std::string to_string(DistanceKind d);
DistanceKind parse_distance(const std::string& s);

/// Per-sample distance d(a, b) -> [B]. Pseudo-Huber uses c = 0.03 sqrt(dim).
torch::Tensor sample_distance(const torch::Tensor& a, const torch::Tensor& b, DistanceKind kind);

// Optional augmentation context for the adversarial terms.
struct AugContext {
  double p_aug = 0.0;
  torch::Generator* gen = nullptr;
};

/// mean d(f(x0 + t_hi z, t_hi; theta), f(x0 + t_lo z, t_lo; theta^-)); the
/// target branch is evaluated without autograd.
torch::Tensor consistency_loss(ConsistencyModel& model, const torch::Tensor& x0, const torch::Tensor& z, double t_hi,
                               double t_lo, DistanceKind kind = DistanceKind::SquaredL2);

/// Consistency term from an already computed online output f(x0 + t_hi z, t_hi; theta).
torch::Tensor consistency_loss_from(const torch::Tensor& online_out, ConsistencyModel& model, const torch::Tensor& x0,
                                    const torch::Tensor& z, double t_lo, DistanceKind kind = DistanceKind::SquaredL2);

/// mean log(1 - D(f(x0 + t_hi z, t_hi; theta), t_hi)).
torch::Tensor generator_adv_loss(ConsistencyModel& model, Discriminator& disc, const torch::Tensor& x0,
                                 const torch::Tensor& z, double t_hi, const AugContext& aug = {});

/// Same loss from an already generated batch (lets the trainer share the
/// online forward with the consistency term).
torch::Tensor generator_adv_loss_from(Discriminator& disc, const torch::Tensor& generated, double t_hi,
                                      const std::optional<torch::Tensor>& cond, const AugContext& aug = {});

/// mean[-log D(x_real, t) - log(1 - D(x_gen, t))]; x_gen must carry no
/// generator graph.
torch::Tensor discriminator_loss(Discriminator& disc, const torch::Tensor& x_real, const torch::Tensor& x_gen_detached,
                                 double t_hi, const std::optional<torch::Tensor>& cond_real = std::nullopt,
                                 const std::optional<torch::Tensor>& cond_fake = std::nullopt,
                                 const AugContext& aug = {});

/// w_gp * mean_b ||d prob_b / d x_b||^2 for a probability map evaluated at x.
/// The result keeps the double-backward graph.
torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& prob_fn,
                               const torch::Tensor& x, double w_gp);

/// Zero-centered penalty on real data for the discriminator. Off-schedule
/// calls return 0 without building any graph. Throws ConfigError when the
/// augmentation pipeline in the path is not differentiable.
torch::Tensor gradient_penalty(Discriminator& disc, const torch::Tensor& x_real, double t_hi, double w_gp,
                               bool on_schedule, const std::optional<torch::Tensor>& cond = std::nullopt,
                               const AugContext& aug = {});

template <typename T>
struct Combined {
  T l_f;
  T l_d_total;
};

/// l_f = (1 - lambda) l_ct + lambda l_g; l_d_total = lambda l_d + lambda l_gp.
template <typename T>
Combined<T> combine(const T& l_ct, const T& l_g, const T& l_d, const T& l_gp, double lambda) {
  return {(1.0 - lambda) * l_ct + lambda * l_g, lambda * l_d + lambda * l_gp};
}

struct LossReport {
  std::int64_t k = 0;
  double l_ct = 0.0;
  double l_g = 0.0;
  double l_f = 0.0;
  double l_d = 0.0;   // lambda_disc * (L_D + L_gp)
  double l_gp = 0.0;  // includes w_gp; 0 on off-schedule steps
  double lambda_used = 0.0;
  std::int64_t n_index = 0;  // 1-based pair index: (t_n, t_{n+1})
  std::pair<double, double> t_pair{0.0, 0.0};  // (t_hi, t_lo)
  double l_d_raw = 0.0;
  double lambda_disc = 0.0;
  std::int64_t n_disc = 0;
  double p_aug = 0.0;
  std::int64_t grid_size = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

// Process-wide counters used by tests to observe which gradient paths ran.
struct LossCounters {
  std::atomic<std::int64_t> second_order{0};  // gradient penalties with create_graph
  std::atomic<std::int64_t> ct_backward{0};   // consistency terms entering the autograd graph
};
LossCounters& loss_counters();

}  // namespace act
