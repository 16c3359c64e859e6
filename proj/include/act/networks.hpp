#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace act {

enum class BackboneKind { Mlp, UnetSmall };
enum class Activation { SiLU, LeakyReLU };

std::string to_string(BackboneKind kind);
std::string to_string(Activation act);
BackboneKind parse_backbone_kind(const std::string& s);
Activation parse_activation(const std::string& s);

// Pointwise activation. LeakyReLU uses slope 0.2.
torch::Tensor apply_activation(Activation act, const torch::Tensor& x);

// Architecture description. `input_shape` is the per-sample shape: {d} for
// vector data, {C, H, W} for images.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::Mlp;
  std::vector<std::int64_t> widths{128, 128, 128};
  Activation activation = Activation::SiLU;
  std::vector<std::int64_t> input_shape{2};
  bool residual_downsampling = false;
  std::int64_t layers_per_block = 2;
  bool time_embedding = true;
  std::int64_t time_embed_dim = 32;

  void validate() const;
  std::string serialize() const;
  static BackboneSpec deserialize(const std::string& text);
  bool operator==(const BackboneSpec& other) const = default;
};

// Sinusoidal embedding of log-time, u = 250 * ln(t), with geometric
// frequencies scale^{-j/half}.
class TimeEmbedding {
 public:
  TimeEmbedding(std::int64_t dim, double scale = 10000.0);
  torch::Tensor operator()(const torch::Tensor& t) const;  // [B] -> [B, dim]
  std::int64_t dim() const { return dim_; }

 private:
  std::int64_t dim_;
  double scale_;
};

// Base of every trainable function approximator; forward(x, t) with t of
// shape [B] (or a scalar broadcast to the batch).
class Backbone : public torch::nn::Module {
 public:
  explicit Backbone(BackboneSpec spec) : spec_(std::move(spec)) {}
  ~Backbone() override = default;

  virtual torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t) = 0;
  const BackboneSpec& spec() const { return spec_; }

 protected:
  void check_input(const torch::Tensor& x) const;
  torch::Tensor broadcast_time(const torch::Tensor& t, std::int64_t batch) const;

 private:
  BackboneSpec spec_;
};

using BackbonePtr = std::shared_ptr<Backbone>;

/// Generator F_theta: output shape equals input shape. The final layer is
/// zero-initialized so a fresh model outputs 0.
BackbonePtr make_generator(const BackboneSpec& spec, std::uint64_t seed);

/// Discriminator trunk: one logit per sample (shape [B]).
BackbonePtr make_trunk(const BackboneSpec& spec, std::uint64_t seed);

/// Zero the trunk's scalar head (logit 0 everywhere).
void zero_head(Backbone& trunk);

std::int64_t parameter_count(const torch::nn::Module& m);

// Flat parameter utilities shared by the EMA, checkpoints and tests.
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);
torch::Tensor flatten_parameters(const torch::nn::Module& m);
void assign_flat_parameters(torch::nn::Module& m, const torch::Tensor& flat);

}  // namespace act
