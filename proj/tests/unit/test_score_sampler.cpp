#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "santa/analysis.hpp"
#include "santa/numeric.hpp"
#include "santa/score_sampler.hpp"

using namespace santa;

namespace {

double rel_l2(const std::vector<double>& est, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (est[i] - ref[i]) * (est[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

std::vector<double> exact_scores(std::span<const double> q, const Matrix& k) {
  std::vector<double> out(k.rows());
  for (std::size_t n = 0; n < k.rows(); ++n) out[n] = dot(q, k.row(n));
  return out;
}

}  // namespace

TEST_SUITE("score_sampler") {

TEST_CASE("ternary samples: entries, counts and degenerate queries") {
  RngStream s(1);
  const auto q = test::gaussian_vector(32, s);
  const auto sample = bernoulli_query_sample(q, 8, BernoulliMode::kStandard, RngStream(2));
  double norm = 0.0;
  for (double x : q) norm = std::max(norm, std::abs(x));
  CHECK(sample.norm == norm);
  REQUIRE(sample.entries.size() == 8);
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::int64_t sum = 0;
    for (const auto& e : sample.entries) {
      CHECK((e[i] == 0 || e[i] == (q[i] > 0 ? 1 : -1)));
      sum += e[i];
    }
    CHECK(sum == sample.counts[i]);
    CHECK(std::abs(sample.counts[i]) <= 8);
  }

  const std::vector<double> zero(5, 0.0);
  const auto z = bernoulli_query_sample(zero, 3, BernoulliMode::kStratified, RngStream(1));
  CHECK(z.selected() == 0);
  CHECK_THROWS_WITH(bernoulli_query_sample(q, 0, BernoulliMode::kStandard, RngStream(1)),
                    "Bernoulli sample count must be >= 1");

  const std::vector<double> sparse{0.5, 0.0, -0.25, 0.0};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = bernoulli_query_sample(sparse, 16, BernoulliMode::kStandard, RngStream(seed));
    CHECK(t.counts[1] == 0);
    CHECK(t.counts[3] == 0);
    CHECK(t.counts[0] == 16);
    CHECK(t.counts[2] <= 0);
  }
}

TEST_CASE("full-norm query reproduces q K^T exactly") {
  RngStream s(3);
  const auto k = test::gaussian_matrix(50, 16, s);
  std::vector<double> q(16);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = i % 3 == 0 ? -0.7 : 0.7;
  for (auto mode : {BernoulliMode::kStandard, BernoulliMode::kStratified}) {
    const auto est = bernoulli_qk_estimate(q, k, 3, mode, RngStream(9));
    CHECK(est.scores == exact_scores(q, k));
    CHECK(est.report.per_head_fraction == 1.0);
    CHECK(est.ledger.key_element_reads == 50 * 16);
  }
}

TEST_CASE("half-zero query fetches at most half the features") {
  RngStream s(4);
  const auto k = test::gaussian_matrix(20, 64, s);
  auto q = test::gaussian_vector(64, s);
  for (std::size_t i = 0; i < 64; i += 2) q[i] = 0.0;
  const auto est = bernoulli_qk_estimate(q, k, 16, BernoulliMode::kStandard, RngStream(5));
  CHECK(est.report.per_head_fraction <= 0.5);
  CHECK(est.ledger.key_element_reads == 20 * est.sample.selected());
}

TEST_CASE("stratified counts are deterministic on the stratum grid") {
  // #{n : (n + u)/B < k/B} = k for every u in [0, 1).
  for (std::size_t b : {1, 2, 4, 8}) {
    for (std::size_t kk = 0; kk <= b; ++kk) {
      for (int g = 0; g < 1000; ++g) {
        const double u = g / 1000.0;
        std::size_t c = 0;
        for (std::size_t n = 0; n < b; ++n) c += (n + u) / b < static_cast<double>(kk) / b ? 1 : 0;
        CHECK(c == kk);
      }
    }
  }
  const std::vector<double> q{1.0, 0.75, -0.5, 0.25, 0.0};
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto t = bernoulli_query_sample(q, 4, BernoulliMode::kStratified, RngStream(seed));
    CHECK(t.counts == std::vector<std::int64_t>{4, 3, -2, 1, 0});
  }
}

TEST_CASE("fraction variance: closed forms and stratified dominance") {
  for (std::size_t b : {1, 2, 4, 8, 16}) {
    for (int k = 1; k <= 19; ++k) {
      const double p = 0.05 * k;
      const double strat = bernoulli_fraction_variance(p, b, BernoulliMode::kStratified);
      const double stand = bernoulli_fraction_variance(p, b, BernoulliMode::kStandard);
      CHECK(stand == doctest::Approx(p * (1 - p) / b));
      CHECK(strat <= stand + 1e-15);
    }
  }
  CHECK_THROWS(bernoulli_fraction_variance(1.5, 4, BernoulliMode::kStandard));

  // Empirical check of both closed forms at p = 0.3, B = 4.
  const std::vector<double> q{1.0, 0.3};
  for (auto mode : {BernoulliMode::kStandard, BernoulliMode::kStratified}) {
    const int trials = 200000;
    double sum = 0.0, sq = 0.0;
    const RngStream root(11);
    for (int t = 0; t < trials; ++t) {
      const auto s = bernoulli_query_sample(q, 4, mode, root.child(Domain::kTrial, t));
      const double f = s.counts[1] / 4.0;
      sum += f;
      sq += f * f;
    }
    const double mean = sum / trials;
    const double var = sq / trials - mean * mean;
    const double expected = bernoulli_fraction_variance(0.3, 4, mode);
    CHECK(std::abs(mean - 0.3) < 4.0 * std::sqrt(expected / trials));
    CHECK(var == doctest::Approx(expected).epsilon(0.03));
  }
}

TEST_CASE("Bernoulli scores are unbiased within 4 sigma") {
  RngStream s(21);
  const auto k = test::gaussian_matrix(6, 8, s);
  const auto q = test::gaussian_vector(8, s);
  const auto truth = exact_scores(q, k);
  for (auto mode : {BernoulliMode::kStandard, BernoulliMode::kStratified}) {
    const std::size_t b = 2;
    const auto var = bernoulli_score_variance(q, k, b, mode);
    const int trials = 100000;
    std::vector<double> mean(6, 0.0);
    const RngStream root(22);
    for (int t = 0; t < trials; ++t) {
      const auto est = bernoulli_qk_estimate(q, k, b, mode, root.child(Domain::kTrial, t));
      for (std::size_t n = 0; n < 6; ++n) mean[n] += est.scores[n] / trials;
    }
    for (std::size_t n = 0; n < 6; ++n) {
      CHECK(std::abs(mean[n] - truth[n]) <= 4.0 * std::sqrt(var[n] / trials) + 1e-12);
    }
  }
}

TEST_CASE("expected access fraction grows with B") {
  double previous = 0.0;
  for (std::size_t b : {1, 2, 4, 8, 16}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      RngStream s(seed);
      const auto q = test::gaussian_vector(128, s);
      const Matrix k(1, 128, 1.0);
      total += bernoulli_qk_estimate(q, k, b, BernoulliMode::kStandard, RngStream(1000 + seed))
                   .report.per_head_fraction;
    }
    CHECK(total / 100 >= previous);
    previous = total / 100;
  }
}

TEST_CASE("relative error near the published B = 4 values") {
  double err[2] = {0.0, 0.0};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream s(seed);
    const auto q = test::gaussian_vector(128, s);
    const auto k = test::gaussian_matrix(1024, 128, s, 1.0 / std::sqrt(128.0));
    const auto truth = exact_scores(q, k);
    err[0] += rel_l2(bernoulli_qk_estimate(q, k, 4, BernoulliMode::kStandard, RngStream(seed + 1)).scores, truth);
    err[1] += rel_l2(bernoulli_qk_estimate(q, k, 4, BernoulliMode::kStratified, RngStream(seed + 1)).scores, truth);
  }
  CHECK(std::abs(err[0] / 100 - 0.60) <= 0.10);
  CHECK(std::abs(err[1] / 100 - 0.30) <= 0.07);
}

TEST_CASE("group estimates: union semantics and mean-group query") {
  RngStream s(31);
  const auto k = test::gaussian_matrix(40, 16, s);
  const auto queries = test::gaussian_matrix(4, 16, s);
  const auto group = bernoulli_group_estimate(queries, k, 2, BernoulliMode::kStandard, RngStream(6));
  CHECK(group.report.group_fraction >= group.report.per_head_fraction);
  for (std::size_t g = 0; g < 4; ++g) {
    const auto single = bernoulli_qk_estimate(queries.row(g), k, 2, BernoulliMode::kStandard,
                                              RngStream(6).child(Domain::kHead, g));
    CHECK(group.scores[g] == single.scores);
  }

  // Identical full-norm queries: m-hat = m and every estimate is exact.
  Matrix same(3, 16, 0.0);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t i = 0; i < 16; ++i) same(g, i) = i % 2 ? 0.4 : -0.4;
  const auto exact = mean_group_query_estimate(same, k, 4, RngStream(7));
  CHECK(exact.mean.estimate == exact.mean.mean);
  for (std::size_t g = 0; g < 3; ++g) {
    const auto truth = exact_scores(same.row(g), k);
    CHECK(test::max_abs_diff(exact.scores[g], truth) < 1e-14);
  }
  CHECK(exact.report.group_fraction == exact.report.per_head_fraction);

  // A feature whose group mean is zero is never fetched.
  auto holes = queries;
  for (std::size_t g = 0; g < 4; ++g) holes(g, 5) = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto est = mean_group_query_estimate(holes, k, 16, RngStream(seed));
    CHECK_FALSE(est.mean.fetched[5]);
    for (double m : est.mean.estimate) CHECK(m >= 0.0);
  }
}

TEST_CASE("mean-group compensation identity") {
  // With m-hat equal to m on a feature, (m-hat / m) * q reproduces q.
  RngStream s(41);
  for (int t = 0; t < 1000; ++t) {
    const double m = std::abs(s.normal()) + 1e-3;
    const double q = s.normal();
    CHECK((m / m) * q == q);
  }
}

TEST_CASE("mean-group access is below the union of per-head patterns") {
  double mean_group = 0.0, union_fraction = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream s(seed);
    const auto queries = test::gaussian_matrix(4, 128, s);
    const Matrix k(8, 128, 1.0);
    mean_group += mean_group_query_estimate(queries, k, 4, RngStream(500 + seed)).report.group_fraction;
    union_fraction +=
        bernoulli_group_estimate(queries, k, 4, BernoulliMode::kStandard, RngStream(500 + seed))
            .report.group_fraction;
  }
  CHECK(mean_group < union_fraction);
}

TEST_CASE("combined Bernoulli + SANTA") {
  RngStream s(51);
  const auto k = test::gaussian_matrix(30, 8, s);
  const auto v = test::gaussian_matrix(30, 8, s);
  const std::vector<double> q{0.5, -0.5, 0.5, 0.5, -0.5, 0.5, -0.5, -0.5};
  const RngStream root(52);
  const auto combined =
      combined_bernoulli_santa(q, k, v, 0.35, 4, 16, Scheme::kSystematic, BernoulliMode::kStandard, root);
  RngStream value = root.child(Domain::kValueStage, 0);
  const auto direct = santa_estimate(q, k, v, 0.35, 16, Scheme::kSystematic, value);
  CHECK(combined.estimate.value == direct.value);
  CHECK(combined.key_access == 1.0);
  CHECK(combined.value_access <= 16.0 / 30.0);

  // Dominant logit far above the estimator's noise.
  Matrix hot_k(10, 2, 0.0);
  hot_k(3, 0) = 200.0;
  const auto hot_v = test::gaussian_matrix(10, 2, s);
  const std::vector<double> hot_q{1.0, 0.0};
  const auto hot = combined_bernoulli_santa(hot_q, hot_k, hot_v, 1.0, 2, 8, Scheme::kMultinomial,
                                            BernoulliMode::kStandard, root);
  CHECK(test::max_abs_diff(hot.estimate.value, {hot_v(3, 0), hot_v(3, 1)}) < 1e-12);

  // Median error over seeds decreases along the budget ladder.
  std::vector<double> medians;
  for (std::size_t budget : {8, 16, 32, 64, 128}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      RngStream g(seed);
      const auto kk = test::gaussian_matrix(512, 64, g);
      const auto vv = test::gaussian_matrix(512, 64, g);
      const auto qq = test::gaussian_vector(64, g);
      const double scale = 1.0 / 8.0;
      const auto dense = dense_attention(qq, kk, vv, scale).value;
      const auto out = combined_bernoulli_santa(qq, kk, vv, scale, 4, budget, Scheme::kMultinomial,
                                                BernoulliMode::kStandard, RngStream(seed + 99));
      errs.push_back(rel_l2(out.estimate.value, dense));
      CHECK(std::isfinite(errs.back()));
    }
    std::nth_element(errs.begin(), errs.begin() + 100, errs.end());
    medians.push_back(errs[100]);
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] < medians[i - 1]);
  CHECK_THROWS(combined_bernoulli_santa(q, k, v, 0.0, 4, 16, Scheme::kSystematic,
                                        BernoulliMode::kStandard, root));
}

TEST_CASE("mode names round trip") {
  for (auto m : {BernoulliMode::kStandard, BernoulliMode::kStratified})
    CHECK(parse_bernoulli_mode(to_string(m)) == m);
  CHECK_THROWS(parse_bernoulli_mode("ternary"));
}

}
