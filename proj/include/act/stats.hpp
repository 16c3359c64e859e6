#pragma once

#include <cstdint>
#include <vector>

namespace act {

struct MannWhitney {
  double u = 0.0;          // U statistic of sample a (midranks for ties)
  double p_less = 1.0;     // P(U <= u_obs) under H0: a tends to be smaller than b
  double p_greater = 1.0;  // P(U >= u_obs): a tends to be larger than b
  double p_two_sided = 1.0;
};

/// Exact permutation Mann-Whitney test (midranks; all splits enumerated, so
/// intended for seed-level sample sizes, n_a + n_b <= 24).
MannWhitney mann_whitney(const std::vector<double>& a, const std::vector<double>& b);

struct ChiSquare {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Pearson independence test on an r x c contingency table (row-major).
ChiSquare chi_square_independence(const std::vector<double>& table, std::int64_t rows, std::int64_t cols);

}  // namespace act
