#include "act/augmentation.hpp"

#include <algorithm>
#include <cmath>

#include "act/errors.hpp"

namespace act {

using torch::Tensor;

namespace {

Tensor fire_like(const Tensor& fire, const Tensor& x) {
  std::vector<std::int64_t> shape(static_cast<std::size_t>(x.dim()), 1);
  shape[0] = x.size(0);
  return fire.reshape(shape);
}

void require_images(const Tensor& x, const char* op) {
  if (x.dim() != 4) throw ShapeError(std::string(op) + ": expects [B, C, H, W] images");
}

Tensor as_points(const Tensor& x, const char* op) {
  if (x.dim() != 2 || x.size(1) % 2 != 0) throw ShapeError(std::string(op) + ": expects [B, 2m] point data");
  return x.reshape({x.size(0), x.size(1) / 2, 2});
}

}  // namespace

Tensor horizontal_flip(const Tensor& x) {
  if (x.dim() == 4) return x.flip({3});
  auto pts = as_points(x, "flip");
  auto sign = torch::tensor({-1.0, 1.0}, x.options());
  return (pts * sign).reshape(x.sizes());
}

AugOp make_flip() {
  return {"flip", [](const Tensor& x, const Tensor& fire, torch::Generator&) {
            return torch::where(fire_like(fire, x), horizontal_flip(x), x);
          }};
}

AugOp make_translate(double max_fraction) {
  return {"translate", [max_fraction](const Tensor& x, const Tensor& fire, torch::Generator& gen) {
            require_images(x, "translate");
            const auto B = x.size(0), H = x.size(2), W = x.size(3);
            std::int64_t m = std::max<std::int64_t>(1, std::llround(max_fraction * static_cast<double>(W)));
            m = std::min({m, H - 1, W - 1});
            auto shifts = torch::randint(-m, m + 1, {B, 2}, gen, torch::kLong);
            if (m <= 0) return x;
            namespace F = torch::nn::functional;
            auto padded = F::pad(x, F::PadFuncOptions({m, m, m, m}).mode(torch::kReflect));
            auto fire_acc = fire.accessor<bool, 1>();
            auto shift_acc = shifts.accessor<std::int64_t, 2>();
            std::vector<Tensor> rows;
            rows.reserve(static_cast<std::size_t>(B));
            for (std::int64_t b = 0; b < B; ++b) {
              if (!fire_acc[b]) {
                rows.push_back(x[b]);
                continue;
              }
              const auto dy = shift_acc[b][0], dx = shift_acc[b][1];
              rows.push_back(padded[b].slice(1, m + dy, m + dy + H).slice(2, m + dx, m + dx + W));
            }
            return torch::stack(rows);
          }};
}

AugOp make_cutout(double size_fraction) {
  return {"cutout", [size_fraction](const Tensor& x, const Tensor& fire, torch::Generator& gen) {
            require_images(x, "cutout");
            const auto B = x.size(0), H = x.size(2), W = x.size(3);
            const auto s = std::max<std::int64_t>(1, std::llround(size_fraction * static_cast<double>(W)));
            auto cy = torch::randint(0, H, {B, 1, 1}, gen, torch::kLong) - s / 2;
            auto cx = torch::randint(0, W, {B, 1, 1}, gen, torch::kLong) - s / 2;
            auto rows = torch::arange(H, torch::kLong).reshape({1, H, 1});
            auto cols = torch::arange(W, torch::kLong).reshape({1, 1, W});
            auto hole = (rows >= cy) & (rows < cy + s) & (cols >= cx) & (cols < cx + s) &
                        fire.reshape({B, 1, 1});
            auto keep = (~hole).to(x.scalar_type()).unsqueeze(1);
            return x * keep;
          }};
}

AugOp make_rotate90() {
  return {"rotate90", [](const Tensor& x, const Tensor& fire, torch::Generator& gen) {
            auto pts = as_points(x, "rotate90");
            const auto B = x.size(0);
            auto k = torch::randint(1, 4, {B}, gen, torch::kLong);
            auto cos_table = torch::tensor({1.0, 0.0, -1.0, 0.0}, x.options());
            auto sin_table = torch::tensor({0.0, 1.0, 0.0, -1.0}, x.options());
            auto c = cos_table.index_select(0, k).reshape({B, 1});
            auto s = sin_table.index_select(0, k).reshape({B, 1});
            auto px = pts.select(2, 0), py = pts.select(2, 1);
            auto rotated = torch::stack({c * px - s * py, s * px + c * py}, 2).reshape(x.sizes());
            return torch::where(fire_like(fire, x), rotated, x);
          }};
}

AugOp make_jitter(double sigma) {
  return {"jitter", [sigma](const Tensor& x, const Tensor& fire, torch::Generator& gen) {
            auto noise = torch::randn(x.sizes(), gen, x.options()) * sigma;
            return torch::where(fire_like(fire, x), x + noise, x);
          }};
}

AugPipeline AugPipeline::flip_only() {
  AugPipeline p;
  p.add(make_flip());
  return p;
}

AugPipeline AugPipeline::image_default() {
  AugPipeline p;
  p.add(make_flip()).add(make_translate()).add(make_cutout());
  return p;
}

AugPipeline AugPipeline::points_default(double jitter_sigma) {
  AugPipeline p;
  p.add(make_rotate90()).add(make_jitter(jitter_sigma));
  return p;
}

AugPipeline AugPipeline::from_names(const std::vector<std::string>& names) {
  AugPipeline p;
  for (const auto& n : names) {
    if (n == "flip") p.add(make_flip());
    else if (n == "translate") p.add(make_translate());
    else if (n == "cutout") p.add(make_cutout());
    else if (n == "rotate90") p.add(make_rotate90());
    else if (n == "jitter") p.add(make_jitter(0.05));
    else throw std::invalid_argument("unknown augmentation op '" + n + "'");
  }
  return p;
}

AugPipeline& AugPipeline::add(AugOp op) {
  ops_.push_back(std::move(op));
  return *this;
}

bool AugPipeline::differentiable() const {
  return std::all_of(ops_.begin(), ops_.end(), [](const AugOp& op) { return op.differentiable; });
}

std::vector<std::string> AugPipeline::names() const {
  std::vector<std::string> out;
  for (const auto& op : ops_) out.push_back(op.name);
  return out;
}

Tensor AugPipeline::apply(const Tensor& x, double p_aug, torch::Generator& gen) const {
  if (!(p_aug >= 0.0 && p_aug <= 1.0)) throw DomainError("augmentation: p_aug outside [0, 1]");
  if (p_aug == 0.0 || ops_.empty()) return x;
  Tensor out = x;
  for (const auto& op : ops_) {
    auto fire = torch::rand({x.size(0)}, gen, torch::kFloat64) < p_aug;
    out = op.fn(out, fire, gen);
  }
  return out;
}

AugController AugController::with_threshold(double tau, double p_r, double mu_p, std::int64_t interval) {
  AugController c;
  c.p_aug = 0.0;
  c.tau = tau;
  c.l_gp_ema = tau;
  c.p_r = p_r;
  c.mu_p = mu_p;
  c.update_interval = interval;
  return c;
}

double AugController::step(double l_gp_observed) {
  const double indicator = l_gp_ema >= tau ? 1.0 : 0.0;
  p_aug = std::clamp(p_aug + 2.0 * (indicator - 0.5) * p_r, 0.0, 1.0);
  l_gp_ema = mu_p * l_gp_ema + (1.0 - mu_p) * l_gp_observed;
  return p_aug;
}

}  // namespace act
