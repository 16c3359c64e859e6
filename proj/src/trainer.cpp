#include "act/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {

namespace fs = std::filesystem;
using torch::Tensor;

namespace {

constexpr char kMagic[8] = {'A', 'C', 'T', 'C', 'K', 'P', 'T', '\n'};

double scalar(const Tensor& t) { return t.detach().item<double>(); }

bool finite(const Tensor& t) { return std::isfinite(scalar(t)); }

ScheduleConfig schedule_of(const RunConfig& cfg) {
  ScheduleConfig s = cfg.sched;
  s.K = cfg.training_iterations;
  return s;
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<Tensor>& params, double lr) {
  return std::make_unique<torch::optim::Adam>(params, torch::optim::AdamOptions(lr));
}

// Length-prefixed binary blobs; integers little-endian as stored in memory.
class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void i64(std::int64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    i64(static_cast<std::int64_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    auto c = t.detach().contiguous();
    i64(static_cast<std::int64_t>(c.scalar_type()));
    i64(c.numel());
    raw(c.data_ptr(), c.numel() * c.element_size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError("cannot open checkpoint '" + path + "'");
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw LoadError(path_ + ": truncated or corrupt checkpoint");
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, sizeof(v));
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof(v));
    return v;
  }
  std::string str() {
    auto n = i64();
    if (n < 0 || n > (1 << 26)) throw LoadError(path_ + ": corrupt string length");
    std::string s(static_cast<std::size_t>(n), '\0');
    raw(s.data(), s.size());
    return s;
  }
  Tensor tensor() {
    auto type = static_cast<torch::ScalarType>(i64());
    auto n = i64();
    if (n < 0 || n > (std::int64_t{1} << 32)) throw LoadError(path_ + ": corrupt tensor length");
    if (type != torch::kFloat64 && type != torch::kUInt8 && type != torch::kLong) {
      throw LoadError(path_ + ": unexpected tensor dtype");
    }
    auto t = torch::empty({n}, torch::TensorOptions().dtype(type));
    raw(t.data_ptr(), n * t.element_size());
    return t;
  }
  void expect_end() {
    char c;
    in_.read(&c, 1);
    if (in_.gcount() != 0) throw LoadError(path_ + ": trailing bytes after checkpoint payload");
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

void write_adam(Writer& w, torch::optim::Adam& opt) {
  auto& params = opt.param_groups().at(0).params();
  w.i64(static_cast<std::int64_t>(params.size()));
  for (const auto& p : params) {
    auto it = opt.state().find(p.unsafeGetTensorImpl());
    if (it == opt.state().end()) {
      w.i64(0);
      continue;
    }
    auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
    w.i64(1);
    w.i64(st.step());
    w.tensor(st.exp_avg());
    w.tensor(st.exp_avg_sq());
  }
}

void read_adam(Reader& r, torch::optim::Adam& opt) {
  auto& params = opt.param_groups().at(0).params();
  if (r.i64() != static_cast<std::int64_t>(params.size())) throw LoadError(r.path() + ": optimizer size mismatch");
  opt.state().clear();
  for (const auto& p : params) {
    if (r.i64() == 0) continue;
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(r.i64());
    auto m = r.tensor();
    auto v = r.tensor();
    if (m.numel() != p.numel() || v.numel() != p.numel()) throw LoadError(r.path() + ": optimizer moment mismatch");
    st->exp_avg(m.view(p.sizes()).clone());
    st->exp_avg_sq(v.view(p.sizes()).clone());
    opt.state()[p.unsafeGetTensorImpl()] = std::move(st);
  }
}

std::string normalization_tag(const Dataset& data) {
  return data.is_image() ? "affine:x/127.5-1" : "native";
}

}  // namespace

BackboneSpec generator_spec(const RunConfig& cfg, const Dataset& data) {
  BackboneSpec s = cfg.gen;
  s.input_shape = data.sample_shape();
  s.time_embedding = true;
  return s;
}

BackboneSpec disc_data_spec(const RunConfig& cfg, const Dataset& data) {
  BackboneSpec s = cfg.disc;
  s.input_shape = data.sample_shape();
  return s;
}

AugPipeline pipeline_for(const RunConfig& cfg, const Dataset& data) {
  if (!cfg.aug_ops.empty()) return AugPipeline::from_names(cfg.aug_ops);
  return data.is_image() ? AugPipeline::image_default() : AugPipeline::points_default();
}

const std::string& Trainer::checkpoint_version() {
  static const std::string v = "act-checkpoint/1";
  return v;
}

Trainer::Trainer(const RunConfig& cfg, DatasetPtr data)
    : cfg_(cfg),
      sched_(schedule_of(cfg)),
      data_(std::move(data)),
      aug_(AugController::with_threshold(cfg.tau, cfg.p_r, cfg.mu_p, cfg.I_gp)),
      data_gen_(make_stream(cfg.seed, Stream::DataGen)),
      data_disc_(make_stream(cfg.seed, Stream::DataDisc)),
      gen_phase_(make_stream(cfg.seed, Stream::GenPhase)),
      disc_phase_(make_stream(cfg.seed, Stream::DiscPhase)),
      aug_gen_(make_stream(cfg.seed, Stream::Augment)) {
  cfg_.sched.K = cfg_.training_iterations;
  cfg_.validate();
  model_ = std::make_unique<ConsistencyModel>(generator_spec(cfg_, *data_), sched_.epsilon, sched_.T,
                                              stream_seed(cfg_.seed, Stream::GenInit));
  disc_ = std::make_unique<Discriminator>(disc_data_spec(cfg_, *data_), cfg_.disc_variant, cfg_.aug,
                                          pipeline_for(cfg_, *data_), stream_seed(cfg_.seed, Stream::DiscInit));
  opt_g_ = make_adam(model_->online().parameters(), cfg_.learning_rate);
  opt_d_ = make_adam(disc_->parameters(), cfg_.lr_d());
  refresh_schedule();
}

void Trainer::refresh_schedule() {
  const auto N = step_count(std::min(k_, sched_.K), sched_);
  if (N != N_) {
    N_ = N;
    grid_ = build_grid(N_, sched_);
    mu_ = ema_decay(N_, sched_);
  }
}

StepBatches Trainer::draw_batches() {
  StepBatches b;
  b.x = next_batch(*data_, cfg_.batch_size, data_gen_);
  b.x_g = next_batch(*data_, cfg_.batch_size, data_disc_);
  b.x_r = next_batch(*data_, cfg_.batch_size, data_disc_);
  return b;
}

LossReport Trainer::step() { return step(draw_batches()); }

void Trainer::abort_non_finite(const std::string& what) {
  std::string snap;
  if (!cfg_.output_dir.empty()) {
    fs::create_directories(cfg_.output_dir);
    snap = (fs::path(cfg_.output_dir) / ("nan_abort_k" + std::to_string(k_) + ".ckpt")).string();
    save(snap);
  }
  throw NonFiniteLoss("non-finite " + what + " at step " + std::to_string(k_), snap);
}

LossReport Trainer::step(const StepBatches& b) {
  refresh_schedule();
  const bool conditional = cfg_.disc_variant == DiscVariant::Conditional;
  const AugContext actx{cfg_.aug ? aug_.p_aug : 0.0, &aug_gen_};
  LossReport rep;
  rep.k = k_;
  rep.grid_size = N_;

  // Generator phase: one (n, z) draw shared by L_CT and L_G.
  const auto n = draw_pair_index(N_, gen_phase_);
  auto z = torch::randn(b.x.sizes(), gen_phase_, b.x.options());
  draws_.gen += 2;
  const double t_hi = grid_[n], t_lo = grid_[n - 1];
  const double lam = cfg_.lambda_at(n, N_);
  auto x_t = b.x + t_hi * z;
  auto online = model_->forward(x_t, t_hi);
  std::optional<Tensor> cond;
  if (conditional) cond = x_t;

  // A term whose weight is exactly zero is evaluated for logging only.
  auto l_ct = consistency_loss_from(lam < 1.0 ? online : online.detach(), *model_, b.x, z, t_lo, cfg_.distance);
  Tensor l_g;
  if (lam > 0.0) {
    l_g = generator_adv_loss_from(*disc_, online, t_hi, cond, actx);
  } else {
    torch::NoGradGuard ng;
    l_g = generator_adv_loss_from(*disc_, online.detach(), t_hi, cond, actx);
  }
  auto l_f = (1.0 - lam) * l_ct + lam * l_g;
  rep.l_ct = scalar(l_ct);
  rep.l_g = scalar(l_g);
  rep.l_f = scalar(l_f);
  rep.lambda_used = lam;
  rep.n_index = n;
  rep.t_pair = {t_hi, t_lo};
  if (!finite(l_f) || !std::isfinite(rep.l_ct) || !std::isfinite(rep.l_g)) abort_non_finite("generator loss");

  opt_g_->zero_grad();
  if (l_f.requires_grad()) l_f.backward();
  opt_g_->step();
  model_->ema_update(mu_);

  // Discriminator phase: fresh batches and a fresh (n, z).
  const auto nd = draw_pair_index(N_, disc_phase_);
  auto zd = torch::randn(b.x_g.sizes(), disc_phase_, b.x_g.options());
  draws_.disc += 2;
  std::optional<Tensor> cond_real, cond_fake;
  if (conditional) {
    auto zr = torch::randn(b.x_r.sizes(), disc_phase_, b.x_r.options());
    ++draws_.disc;
    cond_real = b.x_r + grid_[nd] * zr;
  }
  const double td = grid_[nd];
  const double lam_d = cfg_.lambda_at(nd, N_);
  Tensor fake;
  {
    torch::NoGradGuard ng;
    auto xg_t = b.x_g + td * zd;
    fake = model_->forward(xg_t, td);
    if (conditional) cond_fake = xg_t;
  }
  const bool gp_step = k_ % cfg_.I_gp == 0;
  opt_d_->zero_grad();
  auto l_D = discriminator_loss(*disc_, b.x_r, fake, td, cond_real, cond_fake, actx);
  auto l_gp = gradient_penalty(*disc_, b.x_r, td, cfg_.w_gp, gp_step, cond_real, actx);
  auto l_d_total = lam_d * l_D + lam_d * l_gp;
  rep.l_d_raw = scalar(l_D);
  rep.l_gp = scalar(l_gp);
  rep.l_d = scalar(l_d_total);
  rep.lambda_disc = lam_d;
  rep.n_disc = nd;
  if (!std::isfinite(rep.l_d) || !std::isfinite(rep.l_d_raw) || !std::isfinite(rep.l_gp)) {
    abort_non_finite("discriminator loss");
  }
  if (lam_d > 0.0) {
    l_d_total.backward();
  } else {
    for (auto& p : disc_->parameters()) p.mutable_grad() = torch::zeros_like(p);
  }
  opt_d_->step();

  if (cfg_.aug && gp_step) aug_.step(rep.l_gp);
  rep.p_aug = cfg_.aug ? aug_.p_aug : 0.0;
  ++k_;
  return rep;
}

void Trainer::save(const std::string& path) const {
  Writer w(path);
  w.raw(kMagic, sizeof(kMagic));
  w.str(checkpoint_version());
  w.str(cfg_.serialize());
  w.str(model_->spec().serialize());
  w.str(disc_->trunk().spec().serialize());
  w.str(normalization_tag(*data_));
  w.i64(k_);
  w.f64(aug_.p_aug);
  w.f64(aug_.l_gp_ema);
  w.i64(draws_.gen);
  w.i64(draws_.disc);
  w.tensor(flatten_parameters(model_->online()));
  w.tensor(flatten_parameters(model_->ema()));
  w.tensor(flatten_parameters(disc_->trunk()));
  write_adam(w, *opt_g_);
  write_adam(w, *opt_d_);
  for (const auto* g : {&data_gen_, &data_disc_, &gen_phase_, &disc_phase_, &aug_gen_}) w.tensor(g->get_state());
  w.finish();
}

namespace {

Reader open_checked(const std::string& path) {
  Reader r(path);
  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw LoadError(path + ": not a checkpoint file");
  auto version = r.str();
  if (version != Trainer::checkpoint_version()) {
    throw LoadError(path + ": checkpoint version '" + version + "' (expected '" + Trainer::checkpoint_version() +
                    "')");
  }
  return r;
}

}  // namespace

RunConfig Trainer::read_config(const std::string& path) {
  auto r = open_checked(path);
  return RunConfig::parse(r.str());
}

void Trainer::load(const std::string& path) {
  auto r = open_checked(path);
  r.str();  // config: the caller's config governs, the architecture must match
  const auto gen_spec = r.str();
  const auto disc_spec = r.str();
  if (gen_spec != model_->spec().serialize()) {
    throw LoadError(path + ": generator architecture mismatch (checkpoint: " + gen_spec +
                    "; configured: " + model_->spec().serialize() + ")");
  }
  if (disc_spec != disc_->trunk().spec().serialize()) {
    throw LoadError(path + ": discriminator architecture mismatch (checkpoint: " + disc_spec +
                    "; configured: " + disc_->trunk().spec().serialize() + ")");
  }
  const auto norm = r.str();
  if (norm != normalization_tag(*data_)) throw LoadError(path + ": data normalization mismatch (" + norm + ")");
  k_ = r.i64();
  aug_.p_aug = r.f64();
  aug_.l_gp_ema = r.f64();
  draws_.gen = r.i64();
  draws_.disc = r.i64();
  auto online = r.tensor(), ema = r.tensor(), disc = r.tensor();
  if (online.numel() != parameter_count(model_->online()) || ema.numel() != parameter_count(model_->ema()) ||
      disc.numel() != parameter_count(disc_->trunk())) {
    throw LoadError(path + ": parameter count mismatch");
  }
  assign_flat_parameters(model_->online(), online);
  assign_flat_parameters(model_->ema(), ema);
  assign_flat_parameters(disc_->trunk(), disc);
  read_adam(r, *opt_g_);
  read_adam(r, *opt_d_);
  for (auto* g : {&data_gen_, &data_disc_, &gen_phase_, &disc_phase_, &aug_gen_}) g->set_state(r.tensor());
  r.expect_end();
  N_ = 0;
  refresh_schedule();
}

Trainer Trainer::restore(const std::string& path, DatasetPtr data) {
  Trainer t(read_config(path), std::move(data));
  t.load(path);
  return t;
}

CtTrainer::CtTrainer(const RunConfig& cfg, DatasetPtr data)
    : cfg_(cfg),
      sched_(schedule_of(cfg)),
      data_(std::move(data)),
      data_gen_(make_stream(cfg.seed, Stream::DataGen)),
      gen_phase_(make_stream(cfg.seed, Stream::GenPhase)) {
  model_ = std::make_unique<ConsistencyModel>(generator_spec(cfg_, *data_), sched_.epsilon, sched_.T,
                                              stream_seed(cfg_.seed, Stream::GenInit));
  opt_ = make_adam(model_->online().parameters(), cfg_.learning_rate);
}

Tensor CtTrainer::draw_batch() { return next_batch(*data_, cfg_.batch_size, data_gen_); }

LossReport CtTrainer::step() { return step(draw_batch()); }

LossReport CtTrainer::step(const Tensor& x) {
  const auto N = step_count(std::min(k_, sched_.K), sched_);
  const auto grid = build_grid(N, sched_);
  const auto n = draw_pair_index(N, gen_phase_);
  auto z = torch::randn(x.sizes(), gen_phase_, x.options());
  auto loss = consistency_loss(*model_, x, z, grid[n], grid[n - 1], cfg_.distance);
  opt_->zero_grad();
  loss.backward();
  opt_->step();
  model_->ema_update(ema_decay(N, sched_));
  LossReport rep;
  rep.k = k_++;
  rep.n_index = n;
  rep.t_pair = {grid[n], grid[n - 1]};
  rep.l_ct = scalar(loss);
  rep.l_f = rep.l_ct;
  rep.grid_size = N;
  return rep;
}

std::string checkpoint_name(const std::string& dir, std::int64_t k) {
  char stem[64];
  std::snprintf(stem, sizeof(stem), "ckpt_k%08lld", static_cast<long long>(k));
  fs::path p = fs::path(dir) / (std::string(stem) + ".ckpt");
  for (int rerun = 1; fs::exists(p); ++rerun) {
    p = fs::path(dir) / (std::string(stem) + ".r" + std::to_string(rerun) + ".ckpt");
  }
  return p.string();
}

RunResult run_training(Trainer& trainer, std::int64_t steps, const std::function<void(const LossReport&)>& on_step) {
  const auto& cfg = trainer.config();
  fs::create_directories(cfg.output_dir);
  const auto csv_path = fs::path(cfg.output_dir) / "metrics.csv";
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (fresh) csv << LossReport::csv_header() << '\n';

  RunResult result;
  for (std::int64_t i = 0; i < steps; ++i) {
    auto rep = trainer.step();
    csv << rep.csv_row() << '\n';
    if (on_step) on_step(rep);
    result.reports.push_back(rep);
    if (cfg.checkpoint_interval > 0 && trainer.k() % cfg.checkpoint_interval == 0 && i + 1 < steps) {
      result.last_checkpoint = checkpoint_name(cfg.output_dir, trainer.k());
      trainer.save(result.last_checkpoint);
    }
  }
  csv.flush();
  result.last_checkpoint = checkpoint_name(cfg.output_dir, trainer.k());
  trainer.save(result.last_checkpoint);
  return result;
}

}  // namespace act
