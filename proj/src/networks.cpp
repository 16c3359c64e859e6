#include "act/networks.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "act/errors.hpp"

namespace act {

namespace nn = torch::nn;
using torch::Tensor;

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::Mlp ? "mlp" : "unet-small";
}

std::string to_string(Activation act) {
  return act == Activation::SiLU ? "silu" : "leakyrelu";
}

BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "mlp") return BackboneKind::Mlp;
  if (s == "unet-small" || s == "unet") return BackboneKind::UnetSmall;
  throw std::invalid_argument("unknown backbone kind '" + s + "' (expected mlp|unet-small)");
}

Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "leakyrelu" || s == "lrelu") return Activation::LeakyReLU;
  throw std::invalid_argument("unknown activation '" + s + "' (expected silu|leakyrelu)");
}

Tensor apply_activation(Activation act, const Tensor& x) {
  return act == Activation::SiLU ? torch::silu(x) : torch::leaky_relu(x, 0.2);
}

// ---------------------------------------------------------------------------
// BackboneSpec

void BackboneSpec::validate() const {
  if (widths.empty()) throw ShapeError("BackboneSpec: widths must be non-empty");
  for (auto w : widths) {
    if (w <= 0) throw ShapeError("BackboneSpec: widths must be positive");
  }
  if (input_shape.empty()) throw ShapeError("BackboneSpec: input_shape must be non-empty");
  for (auto s : input_shape) {
    if (s <= 0) throw ShapeError("BackboneSpec: input_shape entries must be positive");
  }
  if (time_embed_dim <= 0 || time_embed_dim % 2 != 0) {
    throw ShapeError("BackboneSpec: time_embed_dim must be positive and even");
  }
  if (kind == BackboneKind::UnetSmall) {
    if (input_shape.size() != 3) throw ShapeError("BackboneSpec: unet-small needs input_shape {C,H,W}");
    if (layers_per_block < 1) throw ShapeError("BackboneSpec: layers_per_block must be >= 1");
    const std::int64_t factor = std::int64_t{1} << (widths.size() - 1);
    if (input_shape[1] % factor != 0 || input_shape[2] % factor != 0) {
      throw ShapeError("BackboneSpec: image size must be divisible by 2^(levels-1)");
    }
  }
}

namespace {

std::string join(const std::vector<std::int64_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<std::int64_t> split_ints(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

}  // namespace

std::string BackboneSpec::serialize() const {
  std::ostringstream os;
  os << "kind=" << to_string(kind) << ";widths=" << join(widths)
     << ";activation=" << to_string(activation) << ";input_shape=" << join(input_shape)
     << ";residual_downsampling=" << (residual_downsampling ? 1 : 0)
     << ";layers_per_block=" << layers_per_block << ";time_embedding=" << (time_embedding ? 1 : 0)
     << ";time_embed_dim=" << time_embed_dim;
  return os.str();
}

BackboneSpec BackboneSpec::deserialize(const std::string& text) {
  BackboneSpec spec;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("BackboneSpec: malformed field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "kind") spec.kind = parse_backbone_kind(val);
    else if (key == "widths") spec.widths = split_ints(val);
    else if (key == "activation") spec.activation = parse_activation(val);
    else if (key == "input_shape") spec.input_shape = split_ints(val);
    else if (key == "residual_downsampling") spec.residual_downsampling = val == "1";
    else if (key == "layers_per_block") spec.layers_per_block = std::stoll(val);
    else if (key == "time_embedding") spec.time_embedding = val == "1";
    else if (key == "time_embed_dim") spec.time_embed_dim = std::stoll(val);
    else throw std::invalid_argument("BackboneSpec: unknown field '" + key + "'");
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// TimeEmbedding

TimeEmbedding::TimeEmbedding(std::int64_t dim, double scale) : dim_(dim), scale_(scale) {
  if (dim <= 0 || dim % 2 != 0) throw ShapeError("TimeEmbedding: dim must be positive and even");
  if (!(scale > 0.0)) throw DomainError("TimeEmbedding: scale must be positive");
}

Tensor TimeEmbedding::operator()(const Tensor& t) const {
  const std::int64_t half = dim_ / 2;
  auto opts = t.options();
  auto j = torch::arange(half, opts);
  auto freqs = torch::exp(-std::log(scale_) * j / static_cast<double>(half));
  auto u = (250.0 * torch::log(t)).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::cos(u), torch::sin(u)}, 1);
}

// ---------------------------------------------------------------------------
// Backbone base

void Backbone::check_input(const Tensor& x) const {
  const auto& shape = spec_.input_shape;
  bool ok = x.dim() == static_cast<std::int64_t>(shape.size()) + 1;
  for (std::size_t i = 0; ok && i < shape.size(); ++i) ok = x.size(static_cast<std::int64_t>(i) + 1) == shape[i];
  if (!ok) {
    std::ostringstream os;
    os << "backbone input shape " << x.sizes() << " does not match [B," << join(shape) << "]";
    throw ShapeError(os.str());
  }
}

Tensor Backbone::broadcast_time(const Tensor& t, std::int64_t batch) const {
  auto tt = t.to(torch::kFloat64);
  if (tt.numel() == 1) return tt.reshape({1}).expand({batch});
  if (tt.dim() != 1 || tt.size(0) != batch) throw ShapeError("time tensor must be scalar or [B]");
  return tt;
}

namespace {

std::int64_t norm_groups(std::int64_t ch) {
  if (ch % 4 == 0) return 4;
  if (ch % 2 == 0) return 2;
  return 1;
}

std::int64_t product(const std::vector<std::int64_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::int64_t{1}, std::multiplies<>());
}

// embedding -> Linear -> act -> Linear
class TimeMlpImpl : public nn::Module {
 public:
  TimeMlpImpl(std::int64_t dim, Activation act) : embed_(dim), act_(act) {
    fc1_ = register_module("fc1", nn::Linear(dim, 2 * dim));
    fc2_ = register_module("fc2", nn::Linear(2 * dim, 2 * dim));
  }
  Tensor forward(const Tensor& t) { return fc2_(apply_activation(act_, fc1_(embed_(t)))); }
  std::int64_t out_dim() const { return 2 * embed_.dim(); }

 private:
  TimeEmbedding embed_;
  Activation act_;
  nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TimeMlp);

// Shared hidden stack of the MLP generator and trunk:
// h <- act(W_i h + P_i e), with an identity skip when residual and widths match.
class MlpBodyImpl : public nn::Module {
 public:
  explicit MlpBodyImpl(const BackboneSpec& s) : act_(s.activation), residual_(s.residual_downsampling) {
    const auto d = product(s.input_shape);
    in_proj_ = register_module("in_proj", nn::Linear(d, s.widths.front()));
    if (s.time_embedding) time_mlp_ = register_module("time_mlp", TimeMlp(s.time_embed_dim, s.activation));
    std::int64_t prev = s.widths.front();
    for (std::size_t i = 0; i < s.widths.size(); ++i) {
      const auto w = s.widths[i];
      layers_.push_back(register_module("fc" + std::to_string(i), nn::Linear(prev, w)));
      if (time_mlp_) tproj_.push_back(register_module("tproj" + std::to_string(i), nn::Linear(time_mlp_->out_dim(), w)));
      prev = w;
    }
  }

  Tensor forward(const Tensor& x_flat, const Tensor& t) {
    Tensor e;
    if (time_mlp_) e = apply_activation(act_, time_mlp_(t));
    Tensor h = in_proj_(x_flat);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor u = layers_[i](h);
      if (e.defined()) u = u + tproj_[i](e);
      u = apply_activation(act_, u);
      h = (residual_ && u.sizes() == h.sizes()) ? h + u : u;
    }
    return h;
  }

 private:
  Activation act_;
  bool residual_;
  nn::Linear in_proj_{nullptr};
  TimeMlp time_mlp_{nullptr};
  std::vector<nn::Linear> layers_;
  std::vector<nn::Linear> tproj_;
};
TORCH_MODULE(MlpBody);

class ResBlockImpl : public nn::Module {
 public:
  ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim, Activation act) : act_(act) {
    norm1_ = register_module("norm1", nn::GroupNorm(norm_groups(in), in));
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
    if (temb_dim > 0) temb_ = register_module("temb", nn::Linear(temb_dim, out));
    norm2_ = register_module("norm2", nn::GroupNorm(norm_groups(out), out));
    conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
    if (in != out) skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
  }

  Tensor forward(const Tensor& x, const Tensor& e) {
    Tensor h = conv1_(apply_activation(act_, norm1_(x)));
    if (temb_ && e.defined()) h = h + temb_(e).unsqueeze(-1).unsqueeze(-1);
    h = conv2_(apply_activation(act_, norm2_(h)));
    return (skip_ ? skip_(x) : x) + h;
  }

 private:
  Activation act_;
  nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  nn::Linear temb_{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head spatial self-attention.
class AttnBlockImpl : public nn::Module {
 public:
  explicit AttnBlockImpl(std::int64_t ch) {
    norm_ = register_module("norm", nn::GroupNorm(norm_groups(ch), ch));
    qkv_ = register_module("qkv", nn::Conv2d(nn::Conv2dOptions(ch, 3 * ch, 1)));
    proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(ch, ch, 1)));
  }

  Tensor forward(const Tensor& x) {
    const auto B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    auto qkv = qkv_(norm_(x)).reshape({B, 3, C, H * W});
    auto q = qkv.select(1, 0), k = qkv.select(1, 1), v = qkv.select(1, 2);
    auto weights = torch::softmax(torch::bmm(q.transpose(1, 2), k) / std::sqrt(static_cast<double>(C)), -1);
    auto out = torch::bmm(v, weights.transpose(1, 2)).reshape({B, C, H, W});
    return x + proj_(out);
  }

 private:
  nn::GroupNorm norm_{nullptr};
  nn::Conv2d qkv_{nullptr}, proj_{nullptr};
};
TORCH_MODULE(AttnBlock);

// Stride-2 conv; the residual form adds an average-pooled identity path.
class DownsampleImpl : public nn::Module {
 public:
  DownsampleImpl(std::int64_t ch, bool residual, Activation act) : residual_(residual), act_(act) {
    conv_ = register_module("conv", nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
    if (residual_) norm_ = register_module("norm", nn::GroupNorm(norm_groups(ch), ch));
  }
  Tensor forward(const Tensor& x) {
    if (!residual_) return conv_(x);
    return conv_(apply_activation(act_, norm_(x))) + torch::avg_pool2d(x, 2);
  }

 private:
  bool residual_;
  Activation act_;
  nn::Conv2d conv_{nullptr};
  nn::GroupNorm norm_{nullptr};
};
TORCH_MODULE(Downsample);

class UpsampleImpl : public nn::Module {
 public:
  explicit UpsampleImpl(std::int64_t ch) {
    conv_ = register_module("conv", nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
  }
  Tensor forward(const Tensor& x) {
    auto up = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    return conv_(up);
  }

 private:
  nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Upsample);

// Down path + mid block, shared by the U-Net generator and the image trunk.
struct UnetEncoder {
  nn::Conv2d conv_in{nullptr};
  std::vector<ResBlock> res;
  std::vector<Downsample> down;
  ResBlock mid1{nullptr}, mid2{nullptr};
  AttnBlock attn{nullptr};
  std::vector<std::int64_t> skip_channels;
  std::int64_t out_channels = 0;

  void build(nn::Module& owner, const BackboneSpec& s, std::int64_t temb_dim, std::int64_t lpb) {
    const auto C = s.input_shape[0];
    std::int64_t ch = s.widths.front();
    conv_in = owner.register_module("conv_in", nn::Conv2d(nn::Conv2dOptions(C, ch, 3).padding(1)));
    skip_channels.push_back(ch);
    for (std::size_t l = 0; l < s.widths.size(); ++l) {
      for (std::int64_t j = 0; j < lpb; ++j) {
        res.push_back(owner.register_module("down" + std::to_string(l) + "_res" + std::to_string(j),
                                            ResBlock(ch, s.widths[l], temb_dim, s.activation)));
        ch = s.widths[l];
        skip_channels.push_back(ch);
      }
      if (l + 1 < s.widths.size()) {
        down.push_back(owner.register_module("down" + std::to_string(l) + "_sample",
                                             Downsample(ch, s.residual_downsampling, s.activation)));
        skip_channels.push_back(ch);
      }
    }
    mid1 = owner.register_module("mid_res1", ResBlock(ch, ch, temb_dim, s.activation));
    attn = owner.register_module("mid_attn", AttnBlock(ch));
    mid2 = owner.register_module("mid_res2", ResBlock(ch, ch, temb_dim, s.activation));
    out_channels = ch;
  }

  Tensor forward(const Tensor& x, const Tensor& e, std::int64_t levels, std::int64_t lpb,
                 std::vector<Tensor>* skips) {
    Tensor h = conv_in(x);
    if (skips) skips->push_back(h);
    std::size_t ri = 0, di = 0;
    for (std::int64_t l = 0; l < levels; ++l) {
      for (std::int64_t j = 0; j < lpb; ++j) {
        h = res[ri++]->forward(h, e);
        if (skips) skips->push_back(h);
      }
      if (l + 1 < levels) {
        h = down[di++]->forward(h);
        if (skips) skips->push_back(h);
      }
    }
    h = mid1->forward(h, e);
    h = attn->forward(h);
    return mid2->forward(h, e);
  }
};

// ---------------------------------------------------------------------------
// Concrete backbones

class MlpGenerator final : public Backbone {
 public:
  explicit MlpGenerator(const BackboneSpec& s) : Backbone(s) {
    body_ = register_module("body", MlpBody(s));
    out_ = register_module("out", nn::Linear(s.widths.back(), product(s.input_shape)));
  }
  Tensor forward(const Tensor& x, const Tensor& t) override {
    check_input(x);
    const auto B = x.size(0);
    auto h = body_(x.reshape({B, -1}), broadcast_time(t, B));
    return out_(h).reshape(x.sizes());
  }
  nn::Linear out_{nullptr};

 private:
  MlpBody body_{nullptr};
};

class MlpTrunk final : public Backbone {
 public:
  explicit MlpTrunk(const BackboneSpec& s) : Backbone(s) {
    body_ = register_module("body", MlpBody(s));
    head_ = register_module("head", nn::Linear(s.widths.back(), 1));
  }
  Tensor forward(const Tensor& x, const Tensor& t) override {
    check_input(x);
    const auto B = x.size(0);
    return head_(body_(x.reshape({B, -1}), broadcast_time(t, B))).squeeze(1);
  }
  nn::Linear head_{nullptr};

 private:
  MlpBody body_{nullptr};
};

class UnetGenerator final : public Backbone {
 public:
  explicit UnetGenerator(const BackboneSpec& s) : Backbone(s) {
    std::int64_t temb_dim = 0;
    if (s.time_embedding) {
      time_mlp_ = register_module("time_mlp", TimeMlp(s.time_embed_dim, s.activation));
      temb_dim = time_mlp_->out_dim();
    }
    enc_.build(*this, s, temb_dim, s.layers_per_block);
    auto skips = enc_.skip_channels;
    std::int64_t ch = enc_.out_channels;
    const auto levels = static_cast<std::int64_t>(s.widths.size());
    for (std::int64_t l = levels - 1; l >= 0; --l) {
      for (std::int64_t j = 0; j < s.layers_per_block + 1; ++j) {
        const auto skip_ch = skips.back();
        skips.pop_back();
        up_res_.push_back(register_module("up" + std::to_string(l) + "_res" + std::to_string(j),
                                          ResBlock(ch + skip_ch, s.widths[static_cast<std::size_t>(l)], temb_dim, s.activation)));
        ch = s.widths[static_cast<std::size_t>(l)];
      }
      if (l > 0) up_.push_back(register_module("up" + std::to_string(l) + "_sample", Upsample(ch)));
    }
    norm_out_ = register_module("norm_out", nn::GroupNorm(norm_groups(ch), ch));
    out_ = register_module("conv_out", nn::Conv2d(nn::Conv2dOptions(ch, s.input_shape[0], 3).padding(1)));
  }

  Tensor forward(const Tensor& x, const Tensor& t) override {
    check_input(x);
    const auto& s = spec();
    const auto levels = static_cast<std::int64_t>(s.widths.size());
    Tensor e;
    if (time_mlp_) e = apply_activation(s.activation, time_mlp_(broadcast_time(t, x.size(0))));
    std::vector<Tensor> skips;
    Tensor h = enc_.forward(x, e, levels, s.layers_per_block, &skips);
    std::size_t ri = 0, ui = 0;
    for (std::int64_t l = levels - 1; l >= 0; --l) {
      for (std::int64_t j = 0; j < s.layers_per_block + 1; ++j) {
        h = torch::cat({h, skips.back()}, 1);
        skips.pop_back();
        h = up_res_[ri++]->forward(h, e);
      }
      if (l > 0) h = up_[ui++]->forward(h);
    }
    return out_(apply_activation(s.activation, norm_out_(h)));
  }
  nn::Conv2d out_{nullptr};

 private:
  TimeMlp time_mlp_{nullptr};
  UnetEncoder enc_;
  std::vector<ResBlock> up_res_;
  std::vector<Upsample> up_;
  nn::GroupNorm norm_out_{nullptr};
};

class UnetTrunk final : public Backbone {
 public:
  explicit UnetTrunk(const BackboneSpec& s) : Backbone(s) {
    std::int64_t temb_dim = 0;
    if (s.time_embedding) {
      time_mlp_ = register_module("time_mlp", TimeMlp(s.time_embed_dim, s.activation));
      temb_dim = time_mlp_->out_dim();
    }
    enc_.build(*this, s, temb_dim, s.layers_per_block);
    norm_out_ = register_module("norm_out", nn::GroupNorm(norm_groups(enc_.out_channels), enc_.out_channels));
    head_ = register_module("head", nn::Linear(enc_.out_channels, 1));
  }

  Tensor forward(const Tensor& x, const Tensor& t) override {
    check_input(x);
    const auto& s = spec();
    Tensor e;
    if (time_mlp_) e = apply_activation(s.activation, time_mlp_(broadcast_time(t, x.size(0))));
    Tensor h = enc_.forward(x, e, static_cast<std::int64_t>(s.widths.size()), s.layers_per_block, nullptr);
    h = apply_activation(s.activation, norm_out_(h)).mean({2, 3});
    return head_(h).squeeze(1);
  }
  nn::Linear head_{nullptr};

 private:
  TimeMlp time_mlp_{nullptr};
  UnetEncoder enc_;
  nn::GroupNorm norm_out_{nullptr};
};

// Variance-preserving fan-in init: U(-a, a) with a = sqrt(3 / fan_in); zero biases.
void init_fan_in(nn::Module& root, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& m : root.modules(/*include_self=*/false)) {
    Tensor weight, bias;
    std::int64_t fan_in = 0;
    if (auto* lin = m->as<nn::Linear>()) {
      weight = lin->weight;
      bias = lin->bias;
      fan_in = weight.size(1);
    } else if (auto* conv = m->as<nn::Conv2d>()) {
      weight = conv->weight;
      bias = conv->bias;
      fan_in = weight.size(1) * weight.size(2) * weight.size(3);
    } else {
      continue;
    }
    const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
    weight.uniform_(-a, a, gen);
    if (bias.defined()) bias.zero_();
  }
}

template <typename Net>
std::shared_ptr<Net> finish(std::shared_ptr<Net> net, std::uint64_t seed) {
  net->to(torch::kFloat64);
  init_fan_in(*net, seed);
  return net;
}

}  // namespace

BackbonePtr make_generator(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  torch::NoGradGuard no_grad;
  if (spec.kind == BackboneKind::Mlp) {
    auto net = finish(std::make_shared<MlpGenerator>(spec), seed);
    net->out_->weight.zero_();
    net->out_->bias.zero_();
    return net;
  }
  auto net = finish(std::make_shared<UnetGenerator>(spec), seed);
  net->out_->weight.zero_();
  net->out_->bias.zero_();
  return net;
}

BackbonePtr make_trunk(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.kind == BackboneKind::Mlp) return finish(std::make_shared<MlpTrunk>(spec), seed);
  return finish(std::make_shared<UnetTrunk>(spec), seed);
}

void zero_head(Backbone& trunk) {
  torch::NoGradGuard no_grad;
  nn::Linear head{nullptr};
  if (auto* mlp = dynamic_cast<MlpTrunk*>(&trunk)) head = mlp->head_;
  else if (auto* unet = dynamic_cast<UnetTrunk*>(&trunk)) head = unet->head_;
  else throw UsageError("zero_head: backbone is not a discriminator trunk");
  head->weight.zero_();
  head->bias.zero_();
}

std::int64_t parameter_count(const nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

void copy_parameters(const nn::Module& src, nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto from = src.parameters();
  auto to = dst.parameters();
  if (from.size() != to.size()) throw ShapeError("copy_parameters: parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].sizes() != to[i].sizes()) throw ShapeError("copy_parameters: parameter shape mismatch");
    to[i].copy_(from[i]);
  }
}

Tensor flatten_parameters(const nn::Module& m) {
  std::vector<Tensor> parts;
  for (const auto& p : m.parameters()) parts.push_back(p.detach().reshape({-1}));
  return torch::cat(parts);
}

void assign_flat_parameters(nn::Module& m, const Tensor& flat) {
  torch::NoGradGuard no_grad;
  std::int64_t offset = 0;
  for (auto& p : m.parameters()) {
    const auto n = p.numel();
    if (offset + n > flat.numel()) throw ShapeError("assign_flat_parameters: flat vector too short");
    p.copy_(flat.slice(0, offset, offset + n).reshape(p.sizes()));
    offset += n;
  }
  if (offset != flat.numel()) throw ShapeError("assign_flat_parameters: flat vector too long");
}

}  // namespace act
