#include "act/rng.hpp"

#include "act/errors.hpp"

namespace act {

namespace {

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  return mix(mix(seed) ^ static_cast<std::uint64_t>(s));
}

torch::Generator make_generator_from(std::uint64_t seed) {
  return torch::make_generator<torch::CPUGeneratorImpl>(seed);
}

torch::Generator make_stream(std::uint64_t seed, Stream s) { return make_generator_from(stream_seed(seed, s)); }

std::int64_t draw_pair_index(std::int64_t N, torch::Generator& gen) {
  if (N < 2) throw DomainError("draw_pair_index: grid needs at least two points");
  return torch::randint(1, N, {1}, gen, torch::kLong).item<std::int64_t>();
}

}  // namespace act
