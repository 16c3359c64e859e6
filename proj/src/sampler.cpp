#include "act/sampler.hpp"

#include <cmath>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {

using torch::Tensor;

void SampleRequest::validate() const {
  if (count < 1) throw DomainError("SampleRequest: count must be >= 1");
  if (steps < 1) throw DomainError("SampleRequest: steps must be >= 1");
  if (mask.has_value() != reference.has_value()) throw UsageError("SampleRequest: mask and reference go together");
  if (mask && mask->sizes() != reference->sizes()) throw ShapeError("SampleRequest: mask shape differs from reference");
}

Sampler::Sampler(ConsistencyModel* model, TimestepGrid grid, bool image_data, ParamSet params)
    : model_(model), grid_(std::move(grid)), image_(image_data), params_(params) {
  if (grid_.size() < 2) throw DomainError("Sampler: grid needs at least two points");
}

ConsistencyModel& Sampler::checked() {
  if (model_ == nullptr) throw UsageError("sampler used without a loaded model");
  return *model_;
}

Tensor Sampler::call(const Tensor& x, double t) {
  ++calls_;
  torch::NoGradGuard ng;
  return checked().forward(x, t, params_);
}

Tensor Sampler::finish(Tensor x) {
  clamped_ = 0;
  if (!image_) return x;
  clamped_ = ((x < -1.0) | (x > 1.0)).sum().item<std::int64_t>();
  return x.clamp(-1.0, 1.0);
}

std::vector<std::int64_t> Sampler::batch_shape(std::int64_t count) const {
  std::vector<std::int64_t> shape{count};
  for (auto d : model_->spec().input_shape) shape.push_back(d);
  return shape;
}

std::vector<double> Sampler::refinement_times(std::int64_t m) const {
  if (m < 0) throw DomainError("refinement_times: negative count");
  std::vector<double> out;
  const auto top = grid_.size() - 1;
  for (std::int64_t i = 1; i <= m; ++i) {
    // indices evenly spaced on [1, top], excluding top itself
    const double pos = static_cast<double>(top) - static_cast<double>(i) * static_cast<double>(top - 1) / m;
    out.push_back(grid_[static_cast<std::int64_t>(std::llround(pos))]);
  }
  return out;
}

Tensor Sampler::sample_one_step(std::int64_t count, std::uint64_t seed) { return sample_multistep(count, 1, seed); }

Tensor Sampler::sample_multistep(std::int64_t count, std::int64_t steps, std::uint64_t seed) {
  checked();
  if (count < 1 || steps < 1) throw DomainError("sample_multistep: count and steps must be >= 1");
  auto gen = make_stream(seed, Stream::Sampler);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const double T = grid_.back(), eps = grid_.front();
  auto x = call(T * torch::randn(batch_shape(count), gen, opts), T);
  for (double tau : refinement_times(steps - 1)) {
    auto z = torch::randn(x.sizes(), gen, opts);
    x = call(x + std::sqrt(tau * tau - eps * eps) * z, tau);
  }
  return finish(x);
}

std::vector<Tensor> Sampler::sample_conditional_trajectory(const Tensor& x0, const Tensor& z,
                                                           const std::vector<std::int64_t>& indices) {
  checked();
  if (x0.sizes() != z.sizes()) throw ShapeError("sample_conditional_trajectory: z must be shaped like x0");
  std::vector<Tensor> out;
  for (auto k : indices) {
    const double t = grid_.at(k);
    out.push_back(call(x0 + t * z, t));
  }
  return out;
}

Tensor Sampler::inpaint(const Tensor& reference, const Tensor& mask, std::int64_t refine_steps, std::uint64_t seed) {
  checked();
  if (reference.sizes() != mask.sizes()) throw ShapeError("inpaint: mask shape differs from reference");
  if (refine_steps < 0) throw DomainError("inpaint: refine_steps must be >= 0");
  if (!((mask == 0) | (mask == 1)).all().item<bool>()) throw DomainError("inpaint: mask entries must be 0 or 1");
  const bool single = reference.dim() == static_cast<std::int64_t>(model_->spec().input_shape.size());
  auto ref = (single ? reference.unsqueeze(0) : reference).to(torch::kFloat64);
  auto m = (single ? mask.unsqueeze(0) : mask).to(torch::kFloat64);
  auto keep = 1.0 - m;

  auto gen = make_stream(seed, Stream::Sampler);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const double T = grid_.back(), eps = grid_.front();
  auto x = call(T * torch::randn(ref.sizes(), gen, opts), T);
  for (double tau : refinement_times(refine_steps)) {
    x = m * ref + keep * x;
    auto z = torch::randn(x.sizes(), gen, opts);
    x = call(x + std::sqrt(tau * tau - eps * eps) * z, tau);
  }
  x = finish(x);
  // Known region copied, not blended, so it is bit-exact.
  x = torch::where(m > 0.5, ref, x);
  return single ? x.squeeze(0) : x;
}

Tensor Sampler::run(const SampleRequest& req) {
  req.validate();
  if (req.mask) return inpaint(*req.reference, *req.mask, req.steps - 1, req.seed);
  return sample_multistep(req.count, req.steps, req.seed);
}

}  // namespace act
