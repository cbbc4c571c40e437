#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "santa/cost_model.hpp"
#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa {

enum class Scheme { kMultinomial, kStratified, kSystematic };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

/// Post-softmax attention weights over keys, with the CDF used for
/// inverse-CDF sampling.
class WeightProfile {
 public:
  static WeightProfile from_logits(std::span<const double> logits);
  // Probabilities must be nonnegative and sum to 1 within 1e-9; they are
  // renormalized exactly. Logits are retained as log(p).
  static WeightProfile from_probs(std::span<const double> probs);

  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> cdf() const { return cdf_; }
  std::span<const double> logits() const { return logits_; }

  // Smallest j with cdf[j] > t. Zero-mass atoms are never returned.
  std::size_t inverse_cdf(double t) const;

 private:
  WeightProfile(std::vector<double> probs, std::vector<double> logits);

  std::vector<double> probs_;
  std::vector<double> cdf_;
  std::vector<double> logits_;
};

struct SampleSet {
  std::vector<std::size_t> indices;
  Scheme scheme = Scheme::kMultinomial;

  std::size_t budget() const { return indices.size(); }
};

struct EstimatorOutput {
  std::vector<double> value;
  CostLedger ledger;
  std::optional<SampleSet> samples;
};

// Independent inverse-CDF draws, with replacement.
SampleSet sample_multinomial(const WeightProfile& profile, std::size_t budget, RngStream& stream);
// One draw per equal-mass stratum [m/S, (m+1)/S), independent offsets.
SampleSet sample_stratified(const WeightProfile& profile, std::size_t budget, RngStream& stream);
// Thresholds (m + u)/S sharing a single uniform u; consumes one draw.
SampleSet sample_systematic(const WeightProfile& profile, std::size_t budget, RngStream& stream);
SampleSet sample(const WeightProfile& profile, std::size_t budget, Scheme scheme,
                 RngStream& stream);

// Exact softmax(q K^T * scale) V, with an instrumented ledger.
EstimatorOutput dense_attention(std::span<const double> q, const Matrix& keys,
                                const Matrix& values, double scale);
EstimatorOutput dense_attention(const WeightProfile& profile, const Matrix& values);

// (1/S) * sum of the sampled value rows, accumulated in sample order.
EstimatorOutput santa_from_samples(const Matrix& values, SampleSet samples);

EstimatorOutput santa_estimate(std::span<const double> q, const Matrix& keys,
                               const Matrix& values, double scale, std::size_t budget,
                               Scheme scheme, RngStream& stream);
EstimatorOutput santa_estimate(const WeightProfile& profile, const Matrix& values,
                               std::size_t budget, Scheme scheme, RngStream& stream);

// Indices of the k largest weights; ties go to the lower index. Returned in
// ascending index order.
std::vector<std::size_t> topk_indices(std::span<const double> probs, std::size_t k);

// Renormalized weighted sum over the k heaviest keys.
EstimatorOutput topk_attention(std::span<const double> q, const Matrix& keys,
                               const Matrix& values, double scale, std::size_t k);
EstimatorOutput topk_attention(const WeightProfile& profile, const Matrix& values,
                               std::size_t k);

}  // namespace santa
