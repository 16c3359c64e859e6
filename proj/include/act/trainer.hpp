#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "act/augmentation.hpp"
#include "act/config.hpp"
#include "act/consistency_model.hpp"
#include "act/data_io.hpp"
#include "act/discriminator.hpp"
#include "act/losses.hpp"
#include "act/schedules.hpp"

namespace act {

// The three data batches one step consumes: x for the generator phase, and
// x_g / x_r for the discriminator phase.
struct StepBatches {
  torch::Tensor x;
  torch::Tensor x_g;
  torch::Tensor x_r;
};

// Random draws (tensors of n or z) consumed by each phase so far.
struct PhaseDraws {
  std::int64_t gen = 0;
  std::int64_t disc = 0;
};

// ACT / ACT-Aug training state and loop. lambda = 0 reduces to consistency
// training, lambda = 1 to a pure adversarial objective.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, DatasetPtr data);

  LossReport step();
  LossReport step(const StepBatches& batches);
  StepBatches draw_batches();

  std::int64_t k() const { return k_; }
  const RunConfig& config() const { return cfg_; }
  const ScheduleConfig& schedule() const { return sched_; }
  const Dataset& data() const { return *data_; }
  DatasetPtr data_ptr() const { return data_; }
  ConsistencyModel& model() { return *model_; }
  Discriminator& disc() { return *disc_; }
  const AugController& aug() const { return aug_; }
  AugController& aug() { return aug_; }
  const TimestepGrid& grid() { refresh_schedule(); return grid_; }
  const PhaseDraws& draws() const { return draws_; }

  // Checkpoint container: version-stamped, every field of the state including
  // optimizer moments and RNG streams.
  void save(const std::string& path) const;
  void load(const std::string& path);
  static Trainer restore(const std::string& path, DatasetPtr data);
  static RunConfig read_config(const std::string& path);
  static const std::string& checkpoint_version();

 private:
  void refresh_schedule();
  [[noreturn]] void abort_non_finite(const std::string& what);

  RunConfig cfg_;
  ScheduleConfig sched_;
  DatasetPtr data_;
  std::unique_ptr<ConsistencyModel> model_;
  std::unique_ptr<Discriminator> disc_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  AugController aug_;

  torch::Generator data_gen_;
  torch::Generator data_disc_;
  torch::Generator gen_phase_;
  torch::Generator disc_phase_;
  torch::Generator aug_gen_;

  std::int64_t k_ = 0;
  std::int64_t N_ = 0;
  double mu_ = 0.0;
  TimestepGrid grid_;
  PhaseDraws draws_;
};

// Plain consistency training, kept as its own path so the lambda = 0
// reduction of Trainer can be checked against it.
class CtTrainer {
 public:
  CtTrainer(const RunConfig& cfg, DatasetPtr data);

  LossReport step();
  LossReport step(const torch::Tensor& x);
  torch::Tensor draw_batch();
  ConsistencyModel& model() { return *model_; }
  std::int64_t k() const { return k_; }

 private:
  RunConfig cfg_;
  ScheduleConfig sched_;
  DatasetPtr data_;
  std::unique_ptr<ConsistencyModel> model_;
  std::unique_ptr<torch::optim::Adam> opt_;
  torch::Generator data_gen_;
  torch::Generator gen_phase_;
  std::int64_t k_ = 0;
};

// Shared construction helpers.
BackboneSpec generator_spec(const RunConfig& cfg, const Dataset& data);
BackboneSpec disc_data_spec(const RunConfig& cfg, const Dataset& data);
AugPipeline pipeline_for(const RunConfig& cfg, const Dataset& data);

// Runs `steps` steps, appending rows to <output_dir>/metrics.csv and writing
// step-stamped checkpoints (every checkpoint_interval steps and at the end).
// Returns the reports of this call. Existing checkpoint files are never
// overwritten.
struct RunResult {
  std::vector<LossReport> reports;
  std::string last_checkpoint;
};
RunResult run_training(Trainer& trainer, std::int64_t steps,
                       const std::function<void(const LossReport&)>& on_step = {});

std::string checkpoint_name(const std::string& dir, std::int64_t k);

}  // namespace act
