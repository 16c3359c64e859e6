#include "act/metrics_lab.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {

using torch::Tensor;

namespace {

auto f64() { return torch::TensorOptions().dtype(torch::kFloat64); }

Tensor as_rows(const Tensor& x) {
  auto t = x.detach().to(torch::kFloat64);
  if (t.dim() == 1) return t.unsqueeze(1);
  return t.flatten(1);
}

// Equalizes sample counts by a seeded subsample of the larger side.
std::pair<Tensor, Tensor> match_sizes(Tensor a, Tensor b) {
  if (a.size(0) == b.size(0)) return {a, b};
  auto gen = make_generator_from(0x5eed);
  const auto n = std::min(a.size(0), b.size(0));
  auto shrink = [&](const Tensor& x) { return x.index_select(0, torch::randperm(x.size(0), gen, torch::kLong).slice(0, 0, n)); };
  if (a.size(0) > n) a = shrink(a);
  else b = shrink(b);
  return {a, b};
}

// Mean optimal matching cost under cost(x, y) = |x - y|^power.
double matched_cost(const Tensor& a_in, const Tensor& b_in, double power, const char* who) {
  auto a = as_rows(a_in), b = as_rows(b_in);
  if (a.size(0) == 0 || b.size(0) == 0) throw DomainError(std::string(who) + ": empty input");
  if (a.size(1) != b.size(1)) throw ShapeError(std::string(who) + ": dimension mismatch");
  std::tie(a, b) = match_sizes(a, b);
  const auto n = a.size(0);
  if (n > kAssignmentCap) throw DomainError(std::string(who) + ": more than 1024 samples per side");
  auto sq = (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(-1);
  auto cost_t = power == 2.0 ? sq : sq.sqrt().pow(power);
  cost_t = cost_t.contiguous();
  std::vector<double> cost(cost_t.data_ptr<double>(), cost_t.data_ptr<double>() + n * n);
  const auto assign = solve_assignment(cost, n);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) total += cost[i * n + assign[i]];
  return total / static_cast<double>(n);
}

}  // namespace

std::vector<std::int64_t> solve_assignment(const std::vector<double>& cost, std::int64_t n) {
  if (static_cast<std::int64_t>(cost.size()) != n * n) throw ShapeError("solve_assignment: cost must be n*n");
  // Shortest augmenting path with potentials (1-based internally).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::int64_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::int64_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const auto i0 = p[j0];
      double delta = inf;
      std::int64_t j1 = 0;
      const double* row = &cost[(i0 - 1) * n];
      for (std::int64_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::int64_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const auto j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::int64_t> assignment(n);
  for (std::int64_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double wasserstein_1d(const Tensor& a_in, const Tensor& b_in, double p) {
  if (a_in.numel() == 0 || b_in.numel() == 0) throw DomainError("wasserstein_1d: empty input");
  if (!(p >= 1.0)) throw DomainError("wasserstein_1d: order must be >= 1");
  auto [a, b] = match_sizes(a_in.detach().to(torch::kFloat64).flatten(), b_in.detach().to(torch::kFloat64).flatten());
  auto as = std::get<0>(a.sort()), bs = std::get<0>(b.sort());
  return std::pow((as - bs).abs().pow(p).mean().item<double>(), 1.0 / p);
}

double wasserstein_nd(const Tensor& a, const Tensor& b) {
  return std::sqrt(matched_cost(a, b, 2.0, "wasserstein_nd"));
}

double transport_cost_nd(const Tensor& a, const Tensor& b) { return matched_cost(a, b, 1.0, "transport_cost_nd"); }

HistogramGrid HistogramGrid::uniform(std::int64_t dim, double lo, double hi, std::int64_t bins) {
  if (dim < 1 || bins < 1 || !(hi > lo)) throw DomainError("HistogramGrid::uniform: invalid grid");
  HistogramGrid g;
  g.lo.assign(dim, lo);
  g.hi.assign(dim, hi);
  g.bins.assign(dim, bins);
  return g;
}

HistogramGrid HistogramGrid::covering(const Tensor& a, const Tensor& b, std::int64_t bins) {
  auto all = torch::cat({as_rows(a), as_rows(b)}, 0);
  auto mn = std::get<0>(all.min(0)), mx = std::get<0>(all.max(0));
  HistogramGrid g;
  for (std::int64_t d = 0; d < all.size(1); ++d) {
    const double lo = mn[d].item<double>(), hi = mx[d].item<double>();
    const double pad = 1e-9 * std::max(1.0, hi - lo);
    g.lo.push_back(lo - pad);
    g.hi.push_back(hi + pad);
    g.bins.push_back(bins);
  }
  return g;
}

namespace {

std::vector<double> histogram(const Tensor& x_in, const HistogramGrid& grid) {
  auto x = as_rows(x_in).contiguous();
  const auto dim = static_cast<std::int64_t>(grid.bins.size());
  if (x.size(1) != dim) throw ShapeError("js_divergence: grid dimension differs from samples");
  std::int64_t cells = 1;
  for (auto b : grid.bins) cells *= b;
  std::vector<double> h(cells, 0.0);
  auto acc = x.accessor<double, 2>();
  double kept = 0.0;
  for (std::int64_t i = 0; i < x.size(0); ++i) {
    std::int64_t cell = 0;
    bool inside = true;
    for (std::int64_t d = 0; d < dim; ++d) {
      const double v = acc[i][d];
      if (v < grid.lo[d] || v > grid.hi[d]) {
        inside = false;
        break;
      }
      auto idx = static_cast<std::int64_t>((v - grid.lo[d]) / (grid.hi[d] - grid.lo[d]) * grid.bins[d]);
      idx = std::min(idx, grid.bins[d] - 1);
      cell = cell * grid.bins[d] + idx;
    }
    if (inside) {
      h[cell] += 1.0;
      kept += 1.0;
    }
  }
  if (kept == 0.0) throw DomainError("js_divergence: no samples inside the grid");
  constexpr double kSmooth = 1e-12;
  double total = 0.0;
  for (auto& c : h) total += (c = c / kept + kSmooth);
  for (auto& c : h) c /= total;
  return h;
}

}  // namespace

double js_divergence(const Tensor& a, const Tensor& b, const HistogramGrid& grid) {
  if (a.numel() == 0 || b.numel() == 0) throw DomainError("js_divergence: empty input");
  const auto p = histogram(a, grid), q = histogram(b, grid);
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    js += 0.5 * p[i] * std::log(p[i] / m) + 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, js);
}

double lipschitz_estimate(const PointMap& f, const Tensor& samples, std::int64_t pairs, std::uint64_t seed) {
  const auto n = samples.size(0);
  if (n < 2) throw DomainError("lipschitz_estimate: need at least two samples");
  Tensor fx;
  {
    torch::NoGradGuard ng;
    fx = as_rows(f(samples));
  }
  auto x = as_rows(samples);
  auto gen = make_generator_from(seed);
  auto i = torch::randint(0, n, {pairs}, gen, torch::kLong);
  auto j = torch::randint(0, n, {pairs}, gen, torch::kLong);
  auto dx = (x.index_select(0, i) - x.index_select(0, j)).norm(2, 1);
  auto df = (fx.index_select(0, i) - fx.index_select(0, j)).norm(2, 1);
  auto keep = dx > 0;
  if (keep.sum().item<std::int64_t>() == 0) return 0.0;
  return (df.masked_select(keep) / dx.masked_select(keep)).max().item<double>();
}

double lipschitz_estimate(ConsistencyModel& model, double t, const Tensor& samples, std::int64_t pairs,
                          std::uint64_t seed) {
  return lipschitz_estimate([&](const Tensor& x) { return model.forward(x, t); }, samples, pairs, seed);
}

std::string BoundReport::csv_header() {
  return "k,t_k,lhs,ct_accum,lipschitz_est,w_qp,mc_stderr,slack_budget,slack,holds,flagged";
}

std::string BoundReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d",
                static_cast<long long>(k), t_k, lhs, ct_accum, lipschitz_est, w_qp, mc_stderr, slack_budget, slack,
                holds ? 1 : 0, flagged ? 1 : 0);
  return buf;
}

std::vector<BoundReport> audit_bound(ConsistencyModel& model, const Dataset& data, const TimestepGrid& grid,
                                     const std::vector<std::int64_t>& indices, const AuditOptions& opt) {
  if (indices.empty()) return {};
  for (auto k : indices) grid.at(k);  // range check
  if (opt.samples < 2 || opt.replicates < 1) throw DomainError("audit_bound: need >= 2 samples, >= 1 replicate");
  const auto kmax = *std::max_element(indices.begin(), indices.end());
  const auto R = opt.replicates;
  const auto K = static_cast<std::int64_t>(indices.size());

  std::vector<std::vector<double>> lhs(K), ct(K), wqp(K);
  std::vector<double> boundary_gap;
  std::vector<double> lip(K, 0.0);
  torch::NoGradGuard ng;
  for (std::int64_t r = 0; r < R; ++r) {
    auto gen = make_generator_from(stream_seed(opt.seed + static_cast<std::uint64_t>(r), Stream::Eval));
    auto x0 = next_batch(data, opt.samples, gen);
    auto z = torch::randn(x0.sizes(), gen, x0.options());
    auto y0 = next_batch(data, opt.samples, gen);
    auto z2 = torch::randn(x0.sizes(), gen, x0.options());
    // f_{t_0} = x0 + eps z exactly, so E|f_{t_0} - x0| = eps E|z|.
    boundary_gap.push_back(grid[0] * z.flatten(1).norm(2, 1).mean().item<double>());

    auto prev = model.forward(x0 + grid[0] * z, grid[0]);
    auto per_sample = torch::zeros({opt.samples}, f64());
    std::vector<Tensor> outputs(kmax + 1);
    std::vector<Tensor> accum(kmax + 1);
    outputs[0] = prev;
    accum[0] = per_sample.clone();
    for (std::int64_t i = 1; i <= kmax; ++i) {
      auto cur = model.forward(x0 + grid[i] * z, grid[i]);
      per_sample += (cur - prev).flatten(1).norm(2, 1);
      outputs[i] = cur;
      accum[i] = per_sample.clone();
      prev = cur;
    }
    for (std::int64_t a = 0; a < K; ++a) {
      const auto k = indices[a];
      lhs[a].push_back(transport_cost_nd(outputs[k], x0));
      ct[a].push_back(accum[k].mean().item<double>());
      wqp[a].push_back(transport_cost_nd(x0 + grid[k] * z, y0 + grid[k] * z2));
      if (r == 0) {
        lip[a] = lipschitz_estimate(model, grid[k], x0 + grid[k] * z, opt.lipschitz_pairs, opt.seed);
      }
    }
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto sem = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  };

  const double gap = mean(boundary_gap);
  std::vector<BoundReport> out;
  for (std::int64_t a = 0; a < K; ++a) {
    BoundReport b;
    b.k = indices[a];
    b.t_k = grid[indices[a]];
    b.lhs = mean(lhs[a]);
    b.ct_accum = mean(ct[a]);
    b.w_qp = mean(wqp[a]);
    b.lipschitz_est = lip[a];
    b.flagged = R < 2 || opt.samples < 64;
    b.mc_stderr = std::hypot(sem(lhs[a]), sem(ct[a]));
    if (b.flagged) b.mc_stderr = std::max(b.mc_stderr, b.lhs);  // widened: no usable spread estimate
    b.slack_budget = opt.slack_fraction * b.ct_accum + gap;
    const double rhs = b.ct_accum + 3.0 * b.mc_stderr + b.slack_budget;
    b.holds = b.lhs <= rhs;
    b.slack = b.lipschitz_est * b.w_qp + rhs - b.lhs;
    out.push_back(b);
  }
  return out;
}

double mode_coverage(const Tensor& samples, const Tensor& modes, double radius) {
  if (!(radius > 0.0)) throw DomainError("mode_coverage: radius must be positive");
  if (modes.size(0) == 0) throw DomainError("mode_coverage: no modes");
  if (samples.size(0) == 0) return 0.0;
  auto s = as_rows(samples), m = as_rows(modes);
  auto d = (m.unsqueeze(1) - s.unsqueeze(0)).pow(2).sum(-1).sqrt();  // [M, S]
  auto nearest = std::get<0>(d.min(1));
  return (nearest <= radius).to(torch::kFloat64).mean().item<double>();
}

FrechetResult frechet_score(const Tensor& feats_a, const Tensor& feats_b) {
  auto a = as_rows(feats_a), b = as_rows(feats_b);
  if (a.size(1) != b.size(1)) throw ShapeError("frechet_score: feature dimension mismatch");
  if (a.size(0) < 2 || b.size(0) < 2) throw DomainError("frechet_score: need at least two samples per side");
  const auto d = a.size(1);
  using Mat = Eigen::MatrixXd;
  auto stats = [&](const Tensor& x, Eigen::VectorXd& mu, Mat& cov) {
    auto xc = x.contiguous();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        xc.data_ptr<double>(), x.size(0), d);
    mu = m.colwise().mean().transpose();
    Mat centered = m.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(x.size(0) - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Mat ca, cb;
  stats(a, mu_a, ca);
  stats(b, mu_b, cb);

  FrechetResult out;
  auto min_eig = [](const Mat& m) { return Eigen::SelfAdjointEigenSolver<Mat>(m).eigenvalues().minCoeff(); };
  if (min_eig(ca) < 1e-12 || min_eig(cb) < 1e-12) {
    ca += 1e-6 * Mat::Identity(d, d);
    cb += 1e-6 * Mat::Identity(d, d);
    out.regularized = true;
  }
  // Tr (S_a S_b)^{1/2} = Tr (S_a^{1/2} S_b S_a^{1/2})^{1/2}, a symmetric PSD root.
  Eigen::SelfAdjointEigenSolver<Mat> ea(ca);
  Mat sqrt_a = ea.eigenvectors() * ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
               ea.eigenvectors().transpose();
  Mat inner = sqrt_a * cb * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  const double tr_sqrt = Eigen::SelfAdjointEigenSolver<Mat>(inner).eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  out.score = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  out.score = std::max(0.0, out.score);
  return out;
}

Gauss8Score score_gauss8(const Tensor& samples, double sigma, std::uint64_t seed) {
  auto gen = make_generator_from(stream_seed(seed, Stream::Eval));
  Gauss8Score out;
  out.w2 = wasserstein_nd(samples, gauss8_stratified(samples.size(0), sigma, gen));
  out.coverage = mode_coverage(samples, gauss8_centers(), 3.0 * sigma);
  return out;
}

Tensor desk_features(const Tensor& images) {
  if (images.dim() != 4) throw ShapeError("desk_features: expected [B, C, H, W]");
  return torch::adaptive_avg_pool2d(images.detach().to(torch::kFloat64), {8, 8}).flatten(1);
}

}  // namespace act
