#include "act/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "act/errors.hpp"

namespace act {

void ScheduleConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < T)) throw DomainError("schedule: require 0 < epsilon < T");
  if (s0 < 1 || s1 < s0) throw DomainError("schedule: require 1 <= s0 <= s1");
  if (K < 1) throw DomainError("schedule: require K >= 1");
  if (!(mu0 > 0.0 && mu0 <= 1.0)) throw DomainError("schedule: require mu0 in (0, 1]");
  if (!(w >= 0.0 && w <= 1.0)) throw DomainError("schedule: require w in [0, 1]");
  if (!(w_mid > 0.0 && w_mid <= w)) throw DomainError("schedule: require 0 < w_mid <= w");
  if (!(rho > 0.0)) throw DomainError("schedule: require rho > 0");
}

std::int64_t step_count(std::int64_t k, const ScheduleConfig& cfg) {
  if (k < 0 || k > cfg.K) {
    throw DomainError("step_count: k=" + std::to_string(k) + " outside [0, " +
                      std::to_string(cfg.K) + "]");
  }
  const double s0 = static_cast<double>(cfg.s0);
  const double s1p = static_cast<double>(cfg.s1 + 1);
  const double frac = static_cast<double>(k) / static_cast<double>(cfg.K);
  const double inner = frac * (s1p * s1p - s0 * s0) + s0 * s0;
  return static_cast<std::int64_t>(std::ceil(std::sqrt(inner) - 1.0)) + 1;
}

double ema_decay(std::int64_t Nk, const ScheduleConfig& cfg) {
  if (cfg.mu0 <= 0.0) throw DomainError("ema_decay: mu0 must be positive");
  if (Nk < 1) throw DomainError("ema_decay: Nk must be >= 1");
  return std::exp(static_cast<double>(cfg.s0) * std::log(cfg.mu0) / static_cast<double>(Nk));
}

double adversarial_weight(std::int64_t n, std::int64_t N, const ScheduleConfig& cfg) {
  if (N < 2) throw DomainError("adversarial_weight: N must be >= 2");
  if (n < 1 || n > N) {
    throw DomainError("adversarial_weight: n=" + std::to_string(n) + " outside [1, N]");
  }
  n = std::min(n, N - 1);
  if (n == N - 1) return cfg.w;
  const double exponent = std::log(cfg.w_mid / cfg.w) / std::log(0.5);
  const double ratio = static_cast<double>(n) / static_cast<double>(N - 1);
  return cfg.w * std::pow(ratio, exponent);
}

TimestepGrid::TimestepGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw DomainError("TimestepGrid: need at least two times");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw DomainError("TimestepGrid: times not strictly increasing");
  }
}

double TimestepGrid::at(std::int64_t i) const {
  if (i < 0 || i >= size()) {
    throw DomainError("grid index " + std::to_string(i) + " outside [0, " +
                      std::to_string(size() - 1) + "]");
  }
  return times_[static_cast<std::size_t>(i)];
}

double TimestepGrid::max_gap() const {
  double gap = 0.0;
  for (std::size_t i = 1; i < times_.size(); ++i) gap = std::max(gap, times_[i] - times_[i - 1]);
  return gap;
}

TimestepGrid build_grid(std::int64_t N, const ScheduleConfig& cfg) {
  if (N < 2) throw DomainError("build_grid: N must be >= 2");
  const double inv_rho = 1.0 / cfg.rho;
  const double lo = std::pow(cfg.epsilon, inv_rho);
  const double hi = std::pow(cfg.T, inv_rho);
  std::vector<double> times(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(N - 1);
    times[static_cast<std::size_t>(i)] = std::pow(lo + frac * (hi - lo), cfg.rho);
  }
  times.front() = cfg.epsilon;
  times.back() = cfg.T;
  return TimestepGrid(std::move(times));
}

}  // namespace act
