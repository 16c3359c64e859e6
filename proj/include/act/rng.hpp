#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace act {

// Independent random streams of one run, all derived from the run seed.
enum class Stream : std::uint64_t {
  GenInit = 1,
  DiscInit,
  DataGen,   // x for the generator phase
  DataDisc,  // x_g, x_r for the discriminator phase
  GenPhase,  // n, z for the generator phase
  DiscPhase, // n, z for the discriminator phase
  Augment,
  Sampler,
  Eval,
};

std::uint64_t stream_seed(std::uint64_t seed, Stream s);
torch::Generator make_stream(std::uint64_t seed, Stream s);
torch::Generator make_generator_from(std::uint64_t seed);

// Uniform pair index n in {1, ..., N-1}.
std::int64_t draw_pair_index(std::int64_t N, torch::Generator& gen);

}  // namespace act
