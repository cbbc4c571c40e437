#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "santa/estimators.hpp"
#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa {

enum class VarianceMethod { kClosedFormMultinomial, kClosedFormStratified, kReplicateSystematic };

std::string_view to_string(VarianceMethod method);

struct VarianceReport {
  Scheme scheme = Scheme::kMultinomial;
  std::size_t budget = 0;
  double var_trace = 0.0;
  VarianceMethod method = VarianceMethod::kClosedFormMultinomial;
  std::size_t replicates = 0;
};

// Per-coordinate variance of the estimator (diagonal of its covariance).
// Multinomial and stratified use the closed forms; systematic integrates the
// piecewise-constant estimator over its shared offset exactly.
std::vector<double> variance_diagonal(const WeightProfile& profile, const Matrix& values,
                                      std::size_t budget, Scheme scheme);

// Expected output sum_j p_j V_j.
std::vector<double> expected_output(const WeightProfile& profile, const Matrix& values);

// Multinomial or stratified only.
VarianceReport var_trace_closed_form(const WeightProfile& profile, const Matrix& values,
                                     std::size_t budget, Scheme scheme);

// Systematic estimator, R replicates on stream.child(kReplicate, r).
VarianceReport var_trace_replicated(const WeightProfile& profile, const Matrix& values,
                                    std::size_t budget, std::size_t replicates,
                                    const RngStream& stream);

struct SlopeFit {
  Scheme scheme;
  double slope;
};

struct VarianceSweep {
  std::vector<VarianceReport> rows;
  std::vector<SlopeFit> slopes;
};

inline constexpr std::size_t kDefaultReplicates = 2000;

VarianceSweep variance_sweep(const WeightProfile& profile, const Matrix& values,
                             std::span<const std::size_t> budgets, std::size_t replicates,
                             const RngStream& stream);

// Ordinary least squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

std::size_t unique_keys(const SampleSet& samples);

// n (1 - (1 - 1/n)^S)
double expected_unique_uniform(std::size_t n, std::size_t budget);

struct PrefillCoverage {
  std::size_t budget = 0;
  double mean_fraction = 0.0;
  std::vector<double> per_trial;  // mean over heads
};

// Causal prefill in 32-bit floats: query r samples from softmax over keys
// 0..r. Q, K ~ N(0, 1); trial t, head h use stream.child(kTrial, t).child(kHead, h).
std::vector<PrefillCoverage> unique_v_rows_prefill(std::size_t n_keys, std::size_t head_dim,
                                                   std::size_t n_heads,
                                                   std::span<const std::size_t> budgets,
                                                   Scheme scheme, std::size_t trials,
                                                   const RngStream& stream,
                                                   std::size_t threads = 1);

struct ConcentrationBound {
  double v_max = 0.0;
  double v_q = 0.0;
  std::size_t budget = 0;
  double delta = 0.0;
  double bound = 0.0;
};

ConcentrationBound bernstein_bound(double v_q, double v_max, std::size_t budget, double delta);

// v_q = trace of the one-sample covariance, V_max = max_j ||V_j - mu||.
ConcentrationBound bernstein_bound_for(const WeightProfile& profile, const Matrix& values,
                                       std::size_t budget, double delta);

struct FidelityReport {
  double relative_l2 = 0.0;
  double cosine_similarity = 0.0;
  std::size_t tile_support = 0;
};

FidelityReport fidelity(std::span<const double> approx, std::span<const double> exact);

}  // namespace santa
