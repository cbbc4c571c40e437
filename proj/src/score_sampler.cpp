#include "santa/score_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>

#include "santa/numeric.hpp"

namespace santa {

namespace {

void require_samples(std::size_t samples) {
  if (samples == 0) throw std::invalid_argument("Bernoulli sample count must be >= 1");
}

void require_width(std::size_t width, const Matrix& keys) {
  if (width != keys.cols()) {
    throw std::invalid_argument("query length does not match key width");
  }
}

// Gather-scale pass over the selected features only.
std::vector<double> gather_scores(std::span<const double> coefficients,
                                  std::span<const bool> selected, const Matrix& keys,
                                  CostLedger& ledger) {
  std::vector<double> out(keys.rows(), 0.0);
  std::uint64_t fetched = 0;
  for (bool s : selected) fetched += s ? 1 : 0;
  for (std::size_t n = 0; n < keys.rows(); ++n) {
    const auto row = keys.row(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (selected[i]) acc += coefficients[i] * row[i];
    }
    out[n] = acc;
  }
  ledger.key_element_reads += keys.rows() * fetched;
  ledger.mults_divs += keys.rows() * fetched;
  ledger.adds += keys.rows() * fetched;
  ledger.score_writes += keys.rows();
  return out;
}

double max_abs(std::span<const double> q) {
  double norm = 0.0;
  for (double x : q) {
    if (!std::isfinite(x)) throw std::invalid_argument("query entries must be finite");
    norm = std::max(norm, std::abs(x));
  }
  return norm;
}

}  // namespace

std::string_view to_string(BernoulliMode mode) {
  return mode == BernoulliMode::kStandard ? "standard" : "stratified";
}

BernoulliMode parse_bernoulli_mode(std::string_view name) {
  if (name == "standard") return BernoulliMode::kStandard;
  if (name == "stratified") return BernoulliMode::kStratified;
  throw std::invalid_argument(fmt::format("unknown Bernoulli mode '{}'", name));
}

double TernaryQuerySample::coefficient(std::size_t i) const {
  return norm * (static_cast<double>(counts[i]) / static_cast<double>(sample_count));
}

std::size_t TernaryQuerySample::selected() const {
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](std::int64_t c) { return c != 0; }));
}

TernaryQuerySample bernoulli_query_sample(std::span<const double> q, std::size_t samples,
                                          BernoulliMode mode, const RngStream& stream) {
  require_samples(samples);
  TernaryQuerySample out;
  out.mode = mode;
  out.sample_count = samples;
  out.norm = max_abs(q);
  out.counts.assign(q.size(), 0);
  if (mode == BernoulliMode::kStandard) {
    out.entries.assign(samples, std::vector<std::int8_t>(q.size(), 0));
  }
  if (out.norm == 0.0) return out;
  const double b = static_cast<double>(samples);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    const double p = std::abs(q[i]) / out.norm;
    const std::int64_t sign = q[i] > 0.0 ? 1 : -1;
    RngStream feature = stream.child(Domain::kFeature, i);
    std::int64_t count = 0;
    for (std::size_t n = 0; n < samples; ++n) {
      const double u = feature.uniform();
      const bool hit = mode == BernoulliMode::kStandard
                           ? u < p
                           : (static_cast<double>(n) + u) / b < p;
      if (!hit) continue;
      ++count;
      if (mode == BernoulliMode::kStandard) out.entries[n][i] = static_cast<std::int8_t>(sign);
    }
    out.counts[i] = sign * count;
  }
  return out;
}

ScoreEstimate bernoulli_qk_estimate(std::span<const double> q, const Matrix& keys,
                                    std::size_t samples, BernoulliMode mode,
                                    const RngStream& stream) {
  require_width(q.size(), keys);
  ScoreEstimate out;
  out.sample = bernoulli_query_sample(q, samples, mode, stream);
  const std::size_t d = q.size();
  std::vector<double> coefficients(d);
  auto selected = std::make_unique<bool[]>(d);
  for (std::size_t i = 0; i < d; ++i) {
    coefficients[i] = out.sample.coefficient(i);
    selected[i] = out.sample.counts[i] != 0;
  }
  out.scores = gather_scores(coefficients, {selected.get(), d}, keys, out.ledger);
  const double fraction = d == 0 ? 0.0 : static_cast<double>(out.sample.selected()) / d;
  out.report = {fraction, fraction};
  return out;
}

GroupScoreEstimate bernoulli_group_estimate(const Matrix& queries, const Matrix& keys,
                                            std::size_t samples, BernoulliMode mode,
                                            const RngStream& stream) {
  if (queries.rows() == 0) throw std::invalid_argument("empty query group");
  require_width(queries.cols(), keys);
  const std::size_t d = queries.cols();
  GroupScoreEstimate out;
  std::vector<bool> any(d, false);
  double per_head = 0.0;
  for (std::size_t g = 0; g < queries.rows(); ++g) {
    auto est = bernoulli_qk_estimate(queries.row(g), keys, samples, mode,
                                     stream.child(Domain::kHead, g));
    for (std::size_t i = 0; i < d; ++i) any[i] = any[i] || est.sample.counts[i] != 0;
    per_head += est.report.per_head_fraction;
    out.ledger += est.ledger;
    out.scores.push_back(std::move(est.scores));
  }
  out.report.per_head_fraction = per_head / static_cast<double>(queries.rows());
  out.report.group_fraction =
      static_cast<double>(std::count(any.begin(), any.end(), true)) / static_cast<double>(d);
  return out;
}

MeanGroupScoreEstimate mean_group_query_estimate(const Matrix& queries, const Matrix& keys,
                                                 std::size_t samples, const RngStream& stream,
                                                 BernoulliMode mode) {
  if (queries.rows() == 0) throw std::invalid_argument("empty query group");
  require_width(queries.cols(), keys);
  const std::size_t d = queries.cols();
  const double group = static_cast<double>(queries.rows());

  MeanGroupScoreEstimate out;
  GroupQueryMean& gm = out.mean;
  gm.mean.assign(d, 0.0);
  for (std::size_t g = 0; g < queries.rows(); ++g) {
    const auto q = queries.row(g);
    for (std::size_t i = 0; i < d; ++i) gm.mean[i] += std::abs(q[i]);
  }
  for (double& m : gm.mean) m /= group;

  const auto sample = bernoulli_query_sample(gm.mean, samples, mode, stream);
  gm.norm = sample.norm;
  gm.estimate.resize(d);
  gm.fetched.assign(d, false);
  auto fetched = std::make_unique<bool[]>(d);
  std::size_t n_fetched = 0;
  for (std::size_t i = 0; i < d; ++i) {
    gm.estimate[i] = sample.coefficient(i);
    fetched[i] = sample.counts[i] != 0 && gm.mean[i] >= kGroupMeanFloor * gm.norm;
    gm.fetched[i] = fetched[i];
    n_fetched += fetched[i] ? 1 : 0;
  }

  std::vector<double> coefficients(d, 0.0);
  for (std::size_t g = 0; g < queries.rows(); ++g) {
    const auto q = queries.row(g);
    for (std::size_t i = 0; i < d; ++i) {
      coefficients[i] = fetched[i] ? (gm.estimate[i] / gm.mean[i]) * q[i] : 0.0;
    }
    CostLedger per_query;
    out.scores.push_back(gather_scores(coefficients, {fetched.get(), d}, keys, per_query));
    // Key features are fetched once for the whole group.
    if (g == 0) out.ledger.key_element_reads += per_query.key_element_reads;
    out.ledger.adds += per_query.adds;
    out.ledger.mults_divs += per_query.mults_divs;
    out.ledger.score_writes += per_query.score_writes;
  }
  const double fraction = static_cast<double>(n_fetched) / static_cast<double>(d);
  out.report = {fraction, fraction};
  return out;
}

double bernoulli_fraction_variance(double p, std::size_t samples, BernoulliMode mode) {
  require_samples(samples);
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("selection probability outside [0, 1]");
  const double b = static_cast<double>(samples);
  if (mode == BernoulliMode::kStandard) return p * (1.0 - p) / b;
  // count = floor(pB) + Bernoulli(frac(pB)).
  const double f = p * b - std::floor(p * b);
  return f * (1.0 - f) / (b * b);
}

std::vector<double> bernoulli_score_variance(std::span<const double> q, const Matrix& keys,
                                             std::size_t samples, BernoulliMode mode) {
  require_width(q.size(), keys);
  const double norm = max_abs(q);
  std::vector<double> feature_var(q.size(), 0.0);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      feature_var[i] =
          norm * norm * bernoulli_fraction_variance(std::abs(q[i]) / norm, samples, mode);
    }
  }
  std::vector<double> out(keys.rows(), 0.0);
  for (std::size_t n = 0; n < keys.rows(); ++n) {
    const auto row = keys.row(n);
    for (std::size_t i = 0; i < row.size(); ++i) out[n] += feature_var[i] * row[i] * row[i];
  }
  return out;
}

CombinedOutput combined_bernoulli_santa(std::span<const double> q, const Matrix& keys,
                                        const Matrix& values, double scale,
                                        std::size_t score_samples, std::size_t budget,
                                        Scheme scheme, BernoulliMode mode,
                                        const RngStream& stream) {
  if (keys.rows() != values.rows()) throw std::invalid_argument("K and V row counts differ");
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
  auto score = bernoulli_qk_estimate(q, keys, score_samples, mode,
                                     stream.child(Domain::kScoreStage, 0));
  for (double& s : score.scores) s *= scale;
  const auto profile = WeightProfile::from_logits(score.scores);
  RngStream value_stream = stream.child(Domain::kValueStage, 0);
  CombinedOutput out;
  out.estimate = santa_estimate(profile, values, budget, scheme, value_stream);
  out.estimate.ledger += score.ledger;
  out.key_access = score.report.per_head_fraction;
  out.value_access = static_cast<double>(out.estimate.ledger.unique_value_rows_group) /
                     static_cast<double>(values.rows());
  return out;
}

}  // namespace santa
