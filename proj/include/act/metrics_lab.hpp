#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "act/consistency_model.hpp"
#include "act/data_io.hpp"
#include "act/schedules.hpp"

namespace act {

// Minimum-cost perfect matching on a square cost matrix (row-major n*n).
// Returns assignment[row] = column.
std::vector<std::int64_t> solve_assignment(const std::vector<double>& cost, std::int64_t n);

/// Exact empirical W_p for 1-D samples by sorted pairing. Unequal sizes are
/// reduced to the smaller one by a seeded subsample of the larger.
double wasserstein_1d(const torch::Tensor& a, const torch::Tensor& b, double p = 2.0);

/// Exact empirical W_2 via optimal assignment on squared distances; at most
/// kAssignmentCap samples per side (throws DomainError above).
constexpr std::int64_t kAssignmentCap = 1024;
double wasserstein_nd(const torch::Tensor& a, const torch::Tensor& b);

/// inf over couplings of E|x - y|_2 (Euclidean ground cost, first power), the
/// W-distance used by the bound audit. Same matching oracle and cap.
double transport_cost_nd(const torch::Tensor& a, const torch::Tensor& b);

// Axis-aligned histogram grid; one (lo, hi, bins) triple per dimension.
struct HistogramGrid {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::int64_t> bins;

  static HistogramGrid uniform(std::int64_t dim, double lo, double hi, std::int64_t bins);
  static HistogramGrid covering(const torch::Tensor& a, const torch::Tensor& b, std::int64_t bins);
};

/// Jensen-Shannon divergence of the two histograms (natural log), with
/// add-1e-12 smoothing of empty bins. Samples outside the grid are dropped.
double js_divergence(const torch::Tensor& a, const torch::Tensor& b, const HistogramGrid& grid);

using PointMap = std::function<torch::Tensor(const torch::Tensor&)>;

/// max over random pairs of |f(x) - f(y)| / |x - y|: an empirical lower bound
/// on the Lipschitz constant. Coincident pairs are skipped.
double lipschitz_estimate(const PointMap& f, const torch::Tensor& samples, std::int64_t pairs,
                          std::uint64_t seed = 0);
double lipschitz_estimate(ConsistencyModel& model, double t, const torch::Tensor& samples, std::int64_t pairs,
                          std::uint64_t seed = 0);

struct BoundReport {
  std::int64_t k = 0;          // grid index of t_k
  double t_k = 0.0;
  double lhs = 0.0;            // W^[f_{t_k}, p_0]
  double ct_accum = 0.0;       // sum_{i <= k} E |f(x_{t_i}) - f(x_{t_{i-1}})|
  double lipschitz_est = 0.0;  // lower bound, reported as such
  double w_qp = 0.0;           // W^[q_{t_k}, p_{t_k}] with q = p: a sampling noise floor
  double mc_stderr = 0.0;
  double slack_budget = 0.0;   // stands in for the unestimated O(dt) terms
  double slack = 0.0;          // (L w_qp + ct_accum + 3 stderr + slack_budget) - lhs
  bool holds = false;          // lhs <= ct_accum + 3 stderr + slack_budget
  bool flagged = false;        // too few samples for a reliable stderr

  static std::string csv_header();
  std::string csv_row() const;
};

struct AuditOptions {
  std::int64_t samples = 512;
  std::int64_t replicates = 4;
  std::int64_t lipschitz_pairs = 2048;
  double slack_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Audits the W-distance bound at the requested grid indices. The cumulative
/// consistency sum runs along conditional trajectories x_0 + t_i z.
std::vector<BoundReport> audit_bound(ConsistencyModel& model, const Dataset& data, const TimestepGrid& grid,
                                     const std::vector<std::int64_t>& indices, const AuditOptions& opt = {});

/// Fraction of modes with at least one sample within `radius`.
double mode_coverage(const torch::Tensor& samples, const torch::Tensor& modes, double radius);

struct FrechetResult {
  double score = 0.0;
  bool regularized = false;
};

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with unbiased sample
/// covariances. Near-singular covariances get 1e-6 I and are flagged.
FrechetResult frechet_score(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

// W_2 to a mode-stratified gauss8 reference of the same size and coverage of
// the eight modes at radius 3 sigma.
struct Gauss8Score {
  double w2 = 0.0;
  double coverage = 0.0;
};
Gauss8Score score_gauss8(const torch::Tensor& samples, double sigma, std::uint64_t seed = 0);

/// Desk-scale image features: 8x8 average-pooled pixels, flattened.
torch::Tensor desk_features(const torch::Tensor& images);

}  // namespace act
