#pragma once

#include <cstdint>
#include <vector>

namespace act {

// Discretization and weighting schedules for consistency training.
//
// Key names follow the run-config file: s0, s1, mu0, w, w_mid.
struct ScheduleConfig {
  double epsilon = 0.002;
  double T = 80.0;
  std::int64_t s0 = 2;
  std::int64_t s1 = 150;
  std::int64_t K = 300000;
  double mu0 = 0.9;
  double w = 0.3;
  double w_mid = 0.3;
  double rho = 7.0;

  // Throws DomainError naming the first violated invariant.
  void validate() const;
};

/// Number of grid points N(k) at training step k; nondecreasing, s0 at k=0 and
/// s1+1 at k=K.
std::int64_t step_count(std::int64_t k, const ScheduleConfig& cfg);

/// EMA coefficient mu(k) = exp(s0 * ln(mu0) / N(k)).
double ema_decay(std::int64_t Nk, const ScheduleConfig& cfg);

/// Adversarial weight lambda_N(n) = w * (n/(N-1))^e, e = log_{1/2}(w_mid/w).
/// n == N is clamped to N-1; valid input range is [1, N].
double adversarial_weight(std::int64_t n, std::int64_t N, const ScheduleConfig& cfg);

// Strictly increasing times t_0 = epsilon < ... < t_{N-1} = T with rho-curved
// spacing. Indexing is 0-based here; t_0 is the boundary time.
class TimestepGrid {
 public:
  TimestepGrid() = default;
  explicit TimestepGrid(std::vector<double> times);

  std::int64_t size() const { return static_cast<std::int64_t>(times_.size()); }
  double operator[](std::int64_t i) const { return times_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const;
  double front() const { return times_.front(); }
  double back() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }

  // Delta t = max_i (t_i - t_{i-1}).
  double max_gap() const;

 private:
  std::vector<double> times_;
};

TimestepGrid build_grid(std::int64_t N, const ScheduleConfig& cfg);

}  // namespace act
