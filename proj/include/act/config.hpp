#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "act/data_io.hpp"
#include "act/discriminator.hpp"
#include "act/losses.hpp"
#include "act/networks.hpp"
#include "act/schedules.hpp"

namespace act {

// Everything a run needs. Text form is one `key = value` per line, '#' starts
// a comment. Schedule and optimization keys: learning_rate, batch_size, mu0,
// s0, s1, w_mid, w, I_gp, w_gp, tau, mu_p, p_r, training_iterations.
struct RunConfig {
  ScheduleConfig sched;  // sched.K mirrors training_iterations

  double learning_rate = 1e-4;
  std::optional<double> learning_rate_d;  // defaults to learning_rate
  std::int64_t batch_size = 80;
  std::int64_t training_iterations = 300000;
  std::int64_t I_gp = 16;
  double w_gp = 10.0;
  double tau = 0.55;
  double mu_p = 0.93;
  double p_r = 0.05;

  // nullopt: the lambda_N(n) schedule; otherwise a constant weight.
  std::optional<double> lambda_const;
  bool aug = false;
  std::vector<std::string> aug_ops;  // empty: default pipeline for the data type
  DiscVariant disc_variant = DiscVariant::TimeCond;
  DistanceKind distance = DistanceKind::SquaredL2;

  DatasetSpec data;
  BackboneSpec gen;   // input_shape is filled from the dataset
  BackboneSpec disc = [] {
    BackboneSpec s;
    s.layers_per_block = 3;  // 1.5x the generator's 2, rounded up
    return s;
  }();

  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 0;  // 0: final checkpoint only

  double lr_d() const { return learning_rate_d.value_or(learning_rate); }
  double lambda_at(std::int64_t n, std::int64_t N) const;

  void validate() const;
  std::string serialize() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Key list accepted by the parser, in serialization order.
  static const std::vector<std::string>& keys();
};

}  // namespace act
