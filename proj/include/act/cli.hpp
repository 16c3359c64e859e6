#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "act/config.hpp"
#include "act/consistency_model.hpp"
#include "act/metrics_lab.hpp"

namespace act {

// Exit codes of `act`.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;

/// Entry point for every subcommand: train, resume, sample, inpaint, eval,
/// bound-check, mode-check. Errors are reported as one line on `err`:
///   error code=<n> kind=<kind> [key=<key>] message="<text>"
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

struct ModeCheckRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double w2 = 0.0;
};

struct ModeCheckResult {
  std::vector<ModeCheckRow> rows;
  // One-sided exact Mann-Whitney p for coverage(lambdas[0]) > coverage(lambdas[i]).
  std::vector<double> p_values;
};

/// Trains one gauss8 model per (lambda, seed) from `base` and scores its
/// one-step samples drawn with `params`.
ModeCheckResult mode_check(const RunConfig& base, const std::vector<double>& lambdas,
                           const std::vector<std::uint64_t>& seeds, std::int64_t samples,
                           ParamSet params = ParamSet::Online);

/// Grid indices audited by bound-check: `points` indices evenly spaced over
/// [0, N-1], first and last included.
std::vector<std::int64_t> audit_indices(std::int64_t N, std::int64_t points);

}  // namespace act
