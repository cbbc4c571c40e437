#include "santa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "santa/numeric.hpp"

namespace santa {

namespace {

void require_shapes(const WeightProfile& profile, const Matrix& values, std::size_t budget) {
  if (profile.size() != values.rows()) {
    throw std::invalid_argument("profile length does not match value rows");
  }
  if (budget == 0) throw std::invalid_argument("empty budget");
}

// Variance of a discrete distribution over value rows with weights w (sum 1).
void add_weighted_variance(std::span<const double> weights, std::size_t first,
                           const Matrix& values, double scale, std::vector<double>& out) {
  const std::size_t d = values.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto row = values.row(first + k);
    for (std::size_t c = 0; c < d; ++c) mean[c] += weights[k] * row[c];
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto row = values.row(first + k);
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = row[c] - mean[c];
      out[c] += scale * weights[k] * diff * diff;
    }
  }
}

std::vector<double> multinomial_diagonal(const WeightProfile& profile, const Matrix& values,
                                         std::size_t budget) {
  std::vector<double> out(values.cols(), 0.0);
  add_weighted_variance(profile.probs(), 0, values, 1.0 / static_cast<double>(budget), out);
  return out;
}

// Stratum m covers [m/S, (m+1)/S); atom j occupies [F(j-1), F(j)). The
// conditional law inside a stratum is the overlap, rescaled by S.
std::vector<double> stratified_diagonal(const WeightProfile& profile, const Matrix& values,
                                        std::size_t budget) {
  const auto cdf = profile.cdf();
  const double s = static_cast<double>(budget);
  std::vector<double> out(values.cols(), 0.0);
  std::size_t j = 0;
  std::vector<double> weights;
  for (std::size_t m = 0; m < budget; ++m) {
    const double lo = static_cast<double>(m) / s;
    const double hi = static_cast<double>(m + 1) / s;
    while (j + 1 < cdf.size() && cdf[j] <= lo) ++j;
    weights.clear();
    const std::size_t first = j;
    for (std::size_t k = j; k < cdf.size(); ++k) {
      const double left = k == 0 ? 0.0 : cdf[k - 1];
      const double mass = std::max(0.0, std::min(cdf[k], hi) - std::max(left, lo)) * s;
      weights.push_back(mass);
      if (cdf[k] >= hi) break;
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 0.0) continue;
    for (double& w : weights) w /= total;
    add_weighted_variance(weights, first, values, 1.0 / (s * s), out);
  }
  return out;
}

// The systematic estimator is constant in u between the points
// frac(S * F(j)); integrate it piece by piece.
std::vector<double> systematic_diagonal(const WeightProfile& profile, const Matrix& values,
                                        std::size_t budget) {
  const auto cdf = profile.cdf();
  const double s = static_cast<double>(budget);
  std::vector<double> cuts{0.0, 1.0};
  for (double f : cdf) {
    const double x = s * f;
    cuts.push_back(x - std::floor(x));
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const std::size_t d = values.cols();
  std::vector<std::vector<double>> pieces;
  std::vector<double> lengths;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    if (len <= 0.0) continue;
    const double u = 0.5 * (cuts[k] + cuts[k + 1]);
    std::vector<double> est(d, 0.0);
    std::size_t j = 0;
    for (std::size_t m = 0; m < budget; ++m) {
      const double t = (static_cast<double>(m) + u) / s;
      while (j + 1 < cdf.size() && !(cdf[j] > t)) ++j;
      const auto row = values.row(j);
      for (std::size_t c = 0; c < d; ++c) est[c] += row[c];
    }
    for (double& x : est) x /= s;
    pieces.push_back(std::move(est));
    lengths.push_back(len);
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += lengths[k] * pieces[k][c];
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = pieces[k][c] - mean[c];
      out[c] += lengths[k] * diff * diff;
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(VarianceMethod method) {
  switch (method) {
    case VarianceMethod::kClosedFormMultinomial: return "closed_form_multinomial";
    case VarianceMethod::kClosedFormStratified: return "closed_form_stratified";
    case VarianceMethod::kReplicateSystematic: return "replicate_systematic";
  }
  return "unknown";
}

std::vector<double> expected_output(const WeightProfile& profile, const Matrix& values) {
  return dense_attention(profile, values).value;
}

std::vector<double> variance_diagonal(const WeightProfile& profile, const Matrix& values,
                                      std::size_t budget, Scheme scheme) {
  require_shapes(profile, values, budget);
  switch (scheme) {
    case Scheme::kMultinomial: return multinomial_diagonal(profile, values, budget);
    case Scheme::kStratified: return stratified_diagonal(profile, values, budget);
    case Scheme::kSystematic: return systematic_diagonal(profile, values, budget);
  }
  throw std::invalid_argument("unknown sampling scheme");
}

VarianceReport var_trace_closed_form(const WeightProfile& profile, const Matrix& values,
                                     std::size_t budget, Scheme scheme) {
  if (scheme == Scheme::kSystematic) {
    throw std::invalid_argument("systematic variance has no closed form; use replicates");
  }
  const auto diag = variance_diagonal(profile, values, budget, scheme);
  VarianceReport out;
  out.scheme = scheme;
  out.budget = budget;
  out.var_trace = std::accumulate(diag.begin(), diag.end(), 0.0);
  out.method = scheme == Scheme::kMultinomial ? VarianceMethod::kClosedFormMultinomial
                                              : VarianceMethod::kClosedFormStratified;
  return out;
}

VarianceReport var_trace_replicated(const WeightProfile& profile, const Matrix& values,
                                    std::size_t budget, std::size_t replicates,
                                    const RngStream& stream) {
  require_shapes(profile, values, budget);
  if (replicates < 2) throw std::invalid_argument("replicate variance needs R >= 2");
  const std::size_t d = values.cols();
  std::vector<std::vector<double>> estimates;
  estimates.reserve(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    RngStream s = stream.child(Domain::kReplicate, r);
    estimates.push_back(santa_estimate(profile, values, budget, Scheme::kSystematic, s).value);
  }
  // Deviations are taken from the first replicate so identical replicates
  // give exactly zero.
  const auto& anchor = estimates.front();
  const double r_count = static_cast<double>(replicates);
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double shift = 0.0, sq = 0.0;
    for (const auto& est : estimates) {
      const double x = est[c] - anchor[c];
      shift += x;
      sq += x * x;
    }
    total += sq - shift * shift / r_count;
  }
  total = std::max(total, 0.0);
  VarianceReport out;
  out.scheme = Scheme::kSystematic;
  out.budget = budget;
  out.var_trace = total / static_cast<double>(replicates - 1);
  out.method = VarianceMethod::kReplicateSystematic;
  out.replicates = replicates;
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("slope fit needs at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("slope fit needs distinct x values");
  return sxy / sxx;
}

VarianceSweep variance_sweep(const WeightProfile& profile, const Matrix& values,
                             std::span<const std::size_t> budgets, std::size_t replicates,
                             const RngStream& stream) {
  if (budgets.empty()) throw std::invalid_argument("variance sweep: empty budget list");
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i] <= budgets[i - 1]) {
      throw std::invalid_argument("variance sweep: budgets must be increasing");
    }
  }
  VarianceSweep out;
  std::vector<double> xs(budgets.begin(), budgets.end());
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic}) {
    std::vector<double> ys;
    for (std::size_t s : budgets) {
      auto report = scheme == Scheme::kSystematic
                        ? var_trace_replicated(profile, values, s, replicates,
                                               stream.child(Domain::kBudget, s))
                        : var_trace_closed_form(profile, values, s, scheme);
      ys.push_back(report.var_trace);
      out.rows.push_back(report);
    }
    const bool fittable = budgets.size() >= 2 &&
                          std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; });
    out.slopes.push_back({scheme, fittable ? loglog_slope(xs, ys) : std::nan("")});
  }
  return out;
}

std::size_t unique_keys(const SampleSet& samples) {
  std::vector<std::size_t> sorted = samples.indices;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

double expected_unique_uniform(std::size_t n, std::size_t budget) {
  if (n == 0) throw std::invalid_argument("expected_unique_uniform: n must be >= 1");
  const double nn = static_cast<double>(n);
  return nn * (1.0 - std::pow(1.0 - 1.0 / nn, static_cast<double>(budget)));
}

std::vector<PrefillCoverage> unique_v_rows_prefill(std::size_t n_keys, std::size_t head_dim,
                                                   std::size_t n_heads,
                                                   std::span<const std::size_t> budgets,
                                                   Scheme scheme, std::size_t trials,
                                                   const RngStream& stream,
                                                   std::size_t threads) {
  if (n_keys == 0 || head_dim == 0 || n_heads == 0 || trials == 0) {
    throw std::invalid_argument("prefill coverage: sizes and trials must be >= 1");
  }
  for (std::size_t s : budgets) {
    if (s == 0) throw std::invalid_argument("empty budget");
  }
  using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t jobs = trials * n_heads;
  // coverage[job][budget index]
  std::vector<std::vector<double>> coverage(jobs, std::vector<double>(budgets.size(), 0.0));
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  const auto n = static_cast<Eigen::Index>(n_keys);
  const auto d = static_cast<Eigen::Index>(head_dim);

  parallel_for(jobs, threads, [&](std::size_t job) {
    const std::size_t trial = job / n_heads;
    const std::size_t head = job % n_heads;
    const RngStream base = stream.child(Domain::kTrial, trial).child(Domain::kHead, head);
    MatF q(n, d), k(n, d);
    RngStream qs = base.child(Domain::kMatrix, 0);
    RngStream ks = base.child(Domain::kMatrix, 1);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = static_cast<float>(qs.normal());
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = static_cast<float>(ks.normal());
    const MatF logits = (q * k.transpose()) * scale;

    std::vector<float> cdf(n_keys);
    std::vector<char> seen(n_keys);
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      const std::size_t budget = budgets[b];
      const double sd = static_cast<double>(budget);
      std::fill(seen.begin(), seen.end(), 0);
      RngStream draws = base.child(Domain::kBudget, budget);
      for (std::size_t r = 0; r < n_keys; ++r) {
        const auto prefix = std::span<const float>(logits.row(static_cast<Eigen::Index>(r)).data(), r + 1);
        const auto probs = softmax_stable(prefix);
        float running = 0.0f;
        for (std::size_t j = 0; j <= r; ++j) {
          running += probs[j];
          cdf[j] = running;
        }
        cdf[r] = 1.0f;
        auto pick = [&](double t) {
          const auto it = std::upper_bound(cdf.begin(), cdf.begin() + static_cast<std::ptrdiff_t>(r + 1),
                                           static_cast<float>(t));
          const auto idx = static_cast<std::size_t>(it - cdf.begin());
          seen[std::min(idx, r)] = 1;
        };
        const double shared = scheme == Scheme::kSystematic ? draws.uniform() : 0.0;
        for (std::size_t m = 0; m < budget; ++m) {
          switch (scheme) {
            case Scheme::kMultinomial: pick(draws.uniform()); break;
            case Scheme::kStratified: pick((static_cast<double>(m) + draws.uniform()) / sd); break;
            case Scheme::kSystematic: pick((static_cast<double>(m) + shared) / sd); break;
          }
        }
      }
      const auto hit = std::count(seen.begin(), seen.end(), 1);
      coverage[job][b] = static_cast<double>(hit) / static_cast<double>(n_keys);
    }
  });

  std::vector<PrefillCoverage> out(budgets.size());
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    out[b].budget = budgets[b];
    out[b].per_trial.assign(trials, 0.0);
    for (std::size_t job = 0; job < jobs; ++job) {
      out[b].per_trial[job / n_heads] += coverage[job][b] / static_cast<double>(n_heads);
    }
    out[b].mean_fraction =
        std::accumulate(out[b].per_trial.begin(), out[b].per_trial.end(), 0.0) /
        static_cast<double>(trials);
  }
  return out;
}

ConcentrationBound bernstein_bound(double v_q, double v_max, std::size_t budget, double delta) {
  if (!(v_q >= 0.0) || !std::isfinite(v_q)) throw std::invalid_argument("bernstein: v_q must be >= 0");
  if (!(v_max > 0.0) || !std::isfinite(v_max)) throw std::invalid_argument("bernstein: V_max must be > 0");
  if (budget == 0) throw std::invalid_argument("empty budget");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bernstein: delta must be in (0, 1)");
  const double s = static_cast<double>(budget);
  const double log_term = std::log(2.0 / delta);
  return {v_max, v_q, budget, delta,
          std::sqrt(2.0 * v_q * log_term / s) + 2.0 * v_max * log_term / (3.0 * s)};
}

ConcentrationBound bernstein_bound_for(const WeightProfile& profile, const Matrix& values,
                                       std::size_t budget, double delta) {
  require_shapes(profile, values, budget);
  const auto mu = expected_output(profile, values);
  const auto diag = multinomial_diagonal(profile, values, 1);
  double v_max = 0.0;
  for (std::size_t j = 0; j < values.rows(); ++j) {
    double sq = 0.0;
    const auto row = values.row(j);
    for (std::size_t c = 0; c < row.size(); ++c) sq += (row[c] - mu[c]) * (row[c] - mu[c]);
    v_max = std::max(v_max, std::sqrt(sq));
  }
  // Keep the bound defined for degenerate profiles where every row equals mu.
  v_max = std::max(v_max, std::numeric_limits<double>::min());
  return bernstein_bound(std::accumulate(diag.begin(), diag.end(), 0.0), v_max, budget, delta);
}

FidelityReport fidelity(std::span<const double> approx, std::span<const double> exact) {
  if (approx.size() != exact.size()) throw std::invalid_argument("fidelity: length mismatch");
  const double exact_norm = l2_norm(exact);
  if (exact_norm == 0.0) throw std::invalid_argument("undefined relative error");
  double diff = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    diff += (approx[i] - exact[i]) * (approx[i] - exact[i]);
  }
  const double approx_norm = l2_norm(approx);
  FidelityReport out;
  out.relative_l2 = std::sqrt(diff) / exact_norm;
  out.cosine_similarity = approx_norm == 0.0 ? 0.0 : dot(approx, exact) / (approx_norm * exact_norm);
  return out;
}

}  // namespace santa
