#include "santa/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "santa/numeric.hpp"

namespace santa {

namespace {

void require_budget(std::size_t budget) {
  if (budget == 0) throw std::invalid_argument("empty budget");
}

void require_rows(const WeightProfile& profile, const Matrix& values) {
  if (profile.size() != values.rows()) {
    throw std::invalid_argument("profile length does not match value rows");
  }
}

std::uint64_t count_unique(std::span<const std::size_t> indices) {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::uint64_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

void charge_score_stage(CostLedger& ledger, const Matrix& keys) {
  ledger.key_element_reads += keys.rows() * keys.cols();
  ledger.score_writes += keys.rows();
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kMultinomial: return "multinomial";
    case Scheme::kStratified: return "stratified";
    case Scheme::kSystematic: return "systematic";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "multinomial") return Scheme::kMultinomial;
  if (name == "stratified") return Scheme::kStratified;
  if (name == "systematic") return Scheme::kSystematic;
  throw std::invalid_argument(fmt::format("unknown sampling scheme '{}'", name));
}

WeightProfile::WeightProfile(std::vector<double> probs, std::vector<double> logits)
    : probs_(std::move(probs)), cdf_(probs_.size()), logits_(std::move(logits)) {
  double running = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    running += probs_[i];
    cdf_[i] = running;
  }
  // Clamp so that t < 1 always resolves to a valid index.
  cdf_.back() = 1.0;
}

WeightProfile WeightProfile::from_logits(std::span<const double> logits) {
  auto probs = softmax_stable(logits);
  return WeightProfile(std::move(probs), std::vector<double>(logits.begin(), logits.end()));
}

WeightProfile WeightProfile::from_probs(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("probabilities must be finite and nonnegative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("probabilities sum to {}, expected 1", total));
  }
  std::vector<double> normalized(probs.size());
  std::vector<double> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    normalized[i] = probs[i] / total;
    logits[i] = std::log(normalized[i]);
  }
  return WeightProfile(std::move(normalized), std::move(logits));
}

std::size_t WeightProfile::inverse_cdf(double t) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), t);
  if (it == cdf_.end()) return cdf_.size() - 1;
  return static_cast<std::size_t>(it - cdf_.begin());
}

SampleSet sample_multinomial(const WeightProfile& profile, std::size_t budget,
                             RngStream& stream) {
  require_budget(budget);
  SampleSet out{std::vector<std::size_t>(budget), Scheme::kMultinomial};
  for (auto& index : out.indices) index = profile.inverse_cdf(stream.uniform());
  return out;
}

SampleSet sample_stratified(const WeightProfile& profile, std::size_t budget,
                            RngStream& stream) {
  require_budget(budget);
  SampleSet out{std::vector<std::size_t>(budget), Scheme::kStratified};
  const double s = static_cast<double>(budget);
  for (std::size_t m = 0; m < budget; ++m) {
    out.indices[m] = profile.inverse_cdf((static_cast<double>(m) + stream.uniform()) / s);
  }
  return out;
}

SampleSet sample_systematic(const WeightProfile& profile, std::size_t budget,
                            RngStream& stream) {
  require_budget(budget);
  SampleSet out{std::vector<std::size_t>(budget), Scheme::kSystematic};
  const double s = static_cast<double>(budget);
  const double u = stream.uniform();
  for (std::size_t m = 0; m < budget; ++m) {
    out.indices[m] = profile.inverse_cdf((static_cast<double>(m) + u) / s);
  }
  return out;
}

SampleSet sample(const WeightProfile& profile, std::size_t budget, Scheme scheme,
                 RngStream& stream) {
  switch (scheme) {
    case Scheme::kMultinomial: return sample_multinomial(profile, budget, stream);
    case Scheme::kStratified: return sample_stratified(profile, budget, stream);
    case Scheme::kSystematic: return sample_systematic(profile, budget, stream);
  }
  throw std::invalid_argument("unknown sampling scheme");
}

EstimatorOutput dense_attention(const WeightProfile& profile, const Matrix& values) {
  require_rows(profile, values);
  const std::size_t d = values.cols();
  EstimatorOutput out{std::vector<double>(d, 0.0), {}, std::nullopt};
  const auto probs = profile.probs();
  for (std::size_t j = 0; j < values.rows(); ++j) {
    const auto row = values.row(j);
    for (std::size_t c = 0; c < d; ++c) out.value[c] += probs[j] * row[c];
    out.ledger.value_element_reads += d;
    out.ledger.mults_divs += d;
    out.ledger.adds += d;
  }
  out.ledger.output_writes = d;
  out.ledger.unique_value_rows_group = values.rows();
  return out;
}

EstimatorOutput dense_attention(std::span<const double> q, const Matrix& keys,
                                const Matrix& values, double scale) {
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw std::invalid_argument("dense_attention: K and V shapes differ");
  }
  const auto profile = WeightProfile::from_logits(scores(q, keys, scale));
  auto out = dense_attention(profile, values);
  charge_score_stage(out.ledger, keys);
  return out;
}

EstimatorOutput santa_from_samples(const Matrix& values, SampleSet samples) {
  require_budget(samples.budget());
  const std::size_t d = values.cols();
  EstimatorOutput out{std::vector<double>(d, 0.0), {}, std::nullopt};
  for (std::size_t index : samples.indices) {
    if (index >= values.rows()) throw std::out_of_range("sample index out of range");
    const auto row = values.row(index);
    for (std::size_t c = 0; c < d; ++c) out.value[c] += row[c];
    out.ledger.value_element_reads += d;
    out.ledger.adds += d;
  }
  const double inv_budget = 1.0 / static_cast<double>(samples.budget());
  for (double& x : out.value) x *= inv_budget;
  out.ledger.mults_divs += d;
  out.ledger.output_writes += d;
  out.ledger.unique_value_rows_group = count_unique(samples.indices);
  out.samples = std::move(samples);
  return out;
}

EstimatorOutput santa_estimate(const WeightProfile& profile, const Matrix& values,
                               std::size_t budget, Scheme scheme, RngStream& stream) {
  require_rows(profile, values);
  return santa_from_samples(values, sample(profile, budget, scheme, stream));
}

EstimatorOutput santa_estimate(std::span<const double> q, const Matrix& keys,
                               const Matrix& values, double scale, std::size_t budget,
                               Scheme scheme, RngStream& stream) {
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw std::invalid_argument("santa_estimate: K and V shapes differ");
  }
  const auto profile = WeightProfile::from_logits(scores(q, keys, scale));
  auto out = santa_estimate(profile, values, budget, scheme, stream);
  charge_score_stage(out.ledger, keys);
  return out;
}

std::vector<std::size_t> topk_indices(std::span<const double> probs, std::size_t k) {
  if (k == 0 || k > probs.size()) {
    throw std::invalid_argument(fmt::format("top-k: k={} out of range [1, {}]", k, probs.size()));
  }
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

EstimatorOutput topk_attention(const WeightProfile& profile, const Matrix& values,
                               std::size_t k) {
  require_rows(profile, values);
  const auto probs = profile.probs();
  const auto selected = topk_indices(probs, k);
  // Renormalizing over the full key set is the identity; skip it so that
  // k = n_k reproduces dense attention bit for bit.
  double kept = 1.0;
  if (k < probs.size()) {
    kept = 0.0;
    for (std::size_t j : selected) kept += probs[j];
  }
  const std::size_t d = values.cols();
  EstimatorOutput out{std::vector<double>(d, 0.0), {}, std::nullopt};
  for (std::size_t j : selected) {
    const double w = k < probs.size() ? probs[j] / kept : probs[j];
    const auto row = values.row(j);
    for (std::size_t c = 0; c < d; ++c) out.value[c] += w * row[c];
    out.ledger.value_element_reads += d;
    out.ledger.mults_divs += d;
    out.ledger.adds += d;
  }
  out.ledger.output_writes = d;
  out.ledger.unique_value_rows_group = k;
  return out;
}

EstimatorOutput topk_attention(std::span<const double> q, const Matrix& keys,
                               const Matrix& values, double scale, std::size_t k) {
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw std::invalid_argument("topk_attention: K and V shapes differ");
  }
  const auto profile = WeightProfile::from_logits(scores(q, keys, scale));
  auto out = topk_attention(profile, values, k);
  charge_score_stage(out.ledger, keys);
  return out;
}

}  // namespace santa
