#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "santa/cost_model.hpp"
#include "santa/estimators.hpp"
#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa {

enum class BernoulliMode { kStandard, kStratified };

std::string_view to_string(BernoulliMode mode);
BernoulliMode parse_bernoulli_mode(std::string_view name);

// Features below this fraction of the group norm are treated as absent when
// dividing by the group mean.
inline constexpr double kGroupMeanFloor = 1e-12;

/// B ternary draws of a query, kept as signed per-feature counts.
struct TernaryQuerySample {
  BernoulliMode mode = BernoulliMode::kStandard;
  std::size_t sample_count = 0;       // B
  double norm = 0.0;                  // max |q_i|
  std::vector<std::int64_t> counts;   // signed, |counts[i]| <= B
  // Standard mode only: the B individual vectors, entries in {-1, 0, +1}.
  std::vector<std::vector<std::int8_t>> entries;

  // Coefficient norm * counts[i] / B multiplying key feature i.
  double coefficient(std::size_t i) const;
  std::size_t selected() const;
};

struct GroupQueryMean {
  std::vector<double> mean;       // m_i = mean_g |q_{g,i}|
  std::vector<double> estimate;   // m̂_i = norm * count_i / B
  double norm = 0.0;              // max m_i
  std::vector<bool> fetched;      // shared zero-pattern
};

struct FeatureAccessReport {
  double per_head_fraction = 0.0;
  double group_fraction = 0.0;
};

struct ScoreEstimate {
  std::vector<double> scores;  // estimate of q K^T (unscaled)
  FeatureAccessReport report;
  CostLedger ledger;
  TernaryQuerySample sample;
};

struct GroupScoreEstimate {
  std::vector<std::vector<double>> scores;  // per query
  FeatureAccessReport report;
  CostLedger ledger;
};

struct MeanGroupScoreEstimate {
  std::vector<std::vector<double>> scores;  // per query
  FeatureAccessReport report;
  CostLedger ledger;
  GroupQueryMean mean;
};

// Feature i uses stream.child(kFeature, i), so feature draws are independent
// of d and of each other.
TernaryQuerySample bernoulli_query_sample(std::span<const double> q, std::size_t samples,
                                          BernoulliMode mode, const RngStream& stream);

ScoreEstimate bernoulli_qk_estimate(std::span<const double> q, const Matrix& keys,
                                    std::size_t samples, BernoulliMode mode,
                                    const RngStream& stream);

// Independent per-head sampling (head g on stream.child(kHead, g)); the group
// fraction is the union of the per-head patterns.
GroupScoreEstimate bernoulli_group_estimate(const Matrix& queries, const Matrix& keys,
                                            std::size_t samples, BernoulliMode mode,
                                            const RngStream& stream);

// One shared pattern from the group mean of |q|; per-query compensation q/m.
MeanGroupScoreEstimate mean_group_query_estimate(const Matrix& queries, const Matrix& keys,
                                                 std::size_t samples, const RngStream& stream,
                                                 BernoulliMode mode = BernoulliMode::kStandard);

// Variance of count/B for selection probability p.
double bernoulli_fraction_variance(double p, std::size_t samples, BernoulliMode mode);

// Per-key variance of the score estimate, closed form.
std::vector<double> bernoulli_score_variance(std::span<const double> q, const Matrix& keys,
                                             std::size_t samples, BernoulliMode mode);

struct CombinedOutput {
  EstimatorOutput estimate;
  double key_access = 0.0;    // fraction of key features fetched
  double value_access = 0.0;  // fraction of value rows fetched
};

// Score stage on stream.child(kScoreStage, 0), value stage on
// stream.child(kValueStage, 0).
CombinedOutput combined_bernoulli_santa(std::span<const double> q, const Matrix& keys,
                                        const Matrix& values, double scale,
                                        std::size_t score_samples, std::size_t budget,
                                        Scheme scheme, BernoulliMode mode,
                                        const RngStream& stream);

}  // namespace santa
