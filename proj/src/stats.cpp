#include "act/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "act/errors.hpp"

namespace act {

namespace {

std::vector<double> midranks(const std::vector<double>& pooled) {
  const auto n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

MannWhitney mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  const auto na = a.size(), nb = b.size();
  if (na == 0 || nb == 0) throw DomainError("mann_whitney: empty sample");
  if (na + nb > 24) throw DomainError("mann_whitney: exact enumeration limited to 24 observations");
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);
  const double offset = static_cast<double>(na * (na + 1)) / 2.0;
  const double r_obs = std::accumulate(ranks.begin(), ranks.begin() + static_cast<long>(na), 0.0);
  const double u_obs = r_obs - offset;

  // Enumerate every choice of na positions; rank sums are multiples of 0.5,
  // so compare on doubled integers.
  const auto key = [](double r) { return static_cast<long long>(std::llround(2.0 * r)); };
  const long long obs = key(r_obs);
  std::vector<bool> pick(na + nb, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(na), true);
  std::sort(pick.begin(), pick.end());
  double total = 0.0, le = 0.0, ge = 0.0;
  const double center = static_cast<double>(na * nb) / 2.0;
  double two = 0.0;
  do {
    double r = 0.0;
    for (std::size_t i = 0; i < pick.size(); ++i)
      if (pick[i]) r += ranks[i];
    const auto kr = key(r);
    total += 1.0;
    if (kr <= obs) le += 1.0;
    if (kr >= obs) ge += 1.0;
    if (std::abs((r - offset) - center) >= std::abs(u_obs - center) - 1e-9) two += 1.0;
  } while (std::next_permutation(pick.begin(), pick.end()));

  MannWhitney out;
  out.u = u_obs;
  out.p_less = le / total;
  out.p_greater = ge / total;
  out.p_two_sided = two / total;
  return out;
}

ChiSquare chi_square_independence(const std::vector<double>& table, std::int64_t rows, std::int64_t cols) {
  if (rows < 2 || cols < 2 || static_cast<std::int64_t>(table.size()) != rows * cols) {
    throw DomainError("chi_square_independence: need an r x c table with r, c >= 2");
  }
  std::vector<double> rs(rows, 0.0), cs(cols, 0.0);
  double n = 0.0;
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      rs[i] += table[i * cols + j];
      cs[j] += table[i * cols + j];
      n += table[i * cols + j];
    }
  if (n <= 0.0) throw DomainError("chi_square_independence: empty table");
  ChiSquare out;
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      const double e = rs[i] * cs[j] / n;
      if (e > 0.0) out.statistic += (table[i * cols + j] - e) * (table[i * cols + j] - e) / e;
    }
  out.dof = static_cast<double>((rows - 1) * (cols - 1));
  boost::math::chi_squared dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

}  // namespace act
