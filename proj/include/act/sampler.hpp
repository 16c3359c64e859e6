#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "act/consistency_model.hpp"
#include "act/schedules.hpp"

namespace act {

struct SampleRequest {
  std::int64_t count = 64;
  std::uint64_t seed = 0;
  std::int64_t steps = 1;
  std::optional<torch::Tensor> mask;       // 1 = known
  std::optional<torch::Tensor> reference;  // known values

  void validate() const;
};

// One-step and multistep generation plus zero-shot inpainting. Image models
// get a final clamp to [-1, 1] after the last model call.
class Sampler {
 public:
  Sampler(ConsistencyModel* model, TimestepGrid grid, bool image_data, ParamSet params = ParamSet::Online);

  /// f(T z, T) for z ~ N(0, I).
  torch::Tensor sample_one_step(std::int64_t count, std::uint64_t seed);

  /// One-step sample followed by steps - 1 noise re-injections at the
  /// refinement times.
  torch::Tensor sample_multistep(std::int64_t count, std::int64_t steps, std::uint64_t seed);

  /// f(x0 + t_k z, t_k) for every requested grid index k.
  std::vector<torch::Tensor> sample_conditional_trajectory(const torch::Tensor& x0, const torch::Tensor& z,
                                                           const std::vector<std::int64_t>& indices);

  /// Inpainting with known-region replacement before each refinement and once
  /// more after the last model call. Batched or single-sample reference.
  torch::Tensor inpaint(const torch::Tensor& reference, const torch::Tensor& mask, std::int64_t refine_steps,
                        std::uint64_t seed);

  torch::Tensor run(const SampleRequest& req);

  /// Decreasing refinement times tau_1 > ... > tau_m, evenly spaced in grid
  /// index between T (excluded) and t_1.
  std::vector<double> refinement_times(std::int64_t m) const;

  std::int64_t model_calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }
  std::int64_t last_clamped() const { return clamped_; }
  const TimestepGrid& grid() const { return grid_; }

 private:
  ConsistencyModel& checked();
  torch::Tensor call(const torch::Tensor& x, double t);
  torch::Tensor finish(torch::Tensor x);
  std::vector<std::int64_t> batch_shape(std::int64_t count) const;

  ConsistencyModel* model_;
  TimestepGrid grid_;
  bool image_;
  ParamSet params_;
  std::int64_t calls_ = 0;
  std::int64_t clamped_ = 0;
};

}  // namespace act
