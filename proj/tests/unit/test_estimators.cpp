#include <map>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "santa/analysis.hpp"
#include "santa/estimators.hpp"
#include "santa/numeric.hpp"

using namespace santa;

namespace {

Matrix row_values(std::size_t n, std::size_t d) {
  Matrix v(n, d);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) v(j, c) = static_cast<double>(10 * j + c);
  return v;
}

WeightProfile one_hot(std::size_t n, std::size_t hot) {
  std::vector<double> p(n, 0.0);
  p[hot] = 1.0;
  return WeightProfile::from_probs(p);
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("weight profile invariants") {
  const auto prof = WeightProfile::from_logits(std::vector<double>{0.3, -1.0, 2.0, 0.0});
  double total = 0.0;
  for (std::size_t i = 0; i < prof.size(); ++i) {
    total += prof.probs()[i];
    if (i > 0) CHECK(prof.cdf()[i] >= prof.cdf()[i - 1]);
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(prof.cdf().back() == 1.0);
  // Zero-mass atoms are never returned.
  const auto z = WeightProfile::from_probs(std::vector<double>{0.5, 0.0, 0.5});
  CHECK(z.inverse_cdf(0.5) == 2);
  CHECK(z.inverse_cdf(0.4999) == 0);
  CHECK_THROWS(WeightProfile::from_probs(std::vector<double>{0.5, 0.4}));
}

TEST_CASE("dense attention examples") {
  const auto v = row_values(5, 3);
  std::vector<double> logits{0, 0, 1e6, 0, 0};
  const auto hot = dense_attention(WeightProfile::from_logits(logits), v);
  CHECK(hot.value == std::vector<double>{20, 21, 22});

  const auto uni = dense_attention(WeightProfile::from_logits(std::vector<double>(4, 0.0)), row_values(4, 2));
  CHECK(uni.value[0] == doctest::Approx(15.0));
  CHECK(uni.value[1] == doctest::Approx(16.0));

  RngStream s(3);
  const auto q = test::gaussian_vector(3, s);
  const auto k = test::gaussian_matrix(5, 3, s);
  const auto vv = test::gaussian_matrix(5, 3, s);
  const auto out = dense_attention(q, k, vv, 0.5);
  // Brute-force oracle.
  std::vector<double> e(5);
  double z = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    e[j] = std::exp(0.5 * (q[0] * k(j, 0) + q[1] * k(j, 1) + q[2] * k(j, 2)));
    z += e[j];
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double ref = 0.0;
    for (std::size_t j = 0; j < 5; ++j) ref += e[j] / z * vv(j, c);
    CHECK(std::abs(out.value[c] - ref) < 1e-12);
  }
  CHECK_THROWS(dense_attention(q, k, test::gaussian_matrix(4, 3, s), 0.5));
}

TEST_CASE("samplers on one-hot profiles and budget errors") {
  const auto prof = one_hot(6, 4);
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic}) {
    RngStream s(1);
    const auto set = sample(prof, 9, scheme, s);
    CHECK(set.budget() == 9);
    for (auto i : set.indices) CHECK(i == 4);
    RngStream t(1);
    CHECK_THROWS_WITH(sample(prof, 0, scheme, t), "empty budget");
  }
}

TEST_CASE("multinomial frequency and determinism") {
  const auto prof = WeightProfile::from_probs(std::vector<double>{0.5, 0.5});
  RngStream s(17);
  const auto set = sample_multinomial(prof, 100000, s);
  const double f = static_cast<double>(std::count(set.indices.begin(), set.indices.end(), 0u)) / 1e5;
  CHECK(f >= 0.494);
  CHECK(f <= 0.506);
  RngStream a(5), b(5);
  CHECK(sample_multinomial(prof, 50, a).indices == sample_multinomial(prof, 50, b).indices);
}

TEST_CASE("stratified examples") {
  const auto half = WeightProfile::from_probs(std::vector<double>{0.5, 0.5});
  const auto quarter = WeightProfile::from_probs(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  RngStream s(23);
  for (int run = 0; run < 500; ++run) {
    CHECK(sample_stratified(half, 2, s).indices == std::vector<std::size_t>{0, 1});
    CHECK(sample_stratified(quarter, 4, s).indices == std::vector<std::size_t>{0, 1, 2, 3});
  }
}

TEST_CASE("systematic examples and one uniform consumed") {
  const auto half = WeightProfile::from_probs(std::vector<double>{0.5, 0.5});
  RngStream s(29);
  for (int run = 0; run < 200; ++run) {
    CHECK(sample_systematic(half, 2, s).indices == std::vector<std::size_t>{0, 1});
  }
  const auto skew = WeightProfile::from_probs(std::vector<double>{0.1, 0.9});
  RngStream t(31);
  for (int run = 0; run < 1000; ++run) {
    const auto set = sample_systematic(skew, 10, t);
    CHECK(std::count(set.indices.begin(), set.indices.end(), 0u) == 1);
  }
  // Oracle: enumerate a grid of offsets U in [0, 0.1) (thresholds U + m/10).
  for (int g = 0; g < 1000; ++g) {
    const double u = 0.1 * g / 1000.0;
    int zeros = 0;
    for (int m = 0; m < 10; ++m) zeros += skew.inverse_cdf(u + m / 10.0) == 0 ? 1 : 0;
    CHECK(zeros == 1);
  }
  RngStream c(1);
  sample_systematic(skew, 64, c);
  CHECK(c.position() == 1);
}

TEST_CASE("inverse CDF table") {
  const auto p = WeightProfile::from_probs(std::vector<double>{0.25, 0.25, 0.5});
  CHECK(p.cdf().back() == 1.0);
  const std::vector<std::pair<double, std::size_t>> table{{0.0, 0}, {0.25, 1}, {0.49, 1}, {0.5, 2}, {0.999, 2}};
  for (const auto& [t, j] : table) CHECK(p.inverse_cdf(t) == j);
  std::vector<std::size_t> picks;
  for (int m = 0; m < 4; ++m) picks.push_back(p.inverse_cdf((m + 0.5) / 4));
  CHECK(picks == std::vector<std::size_t>{0, 1, 2, 2});
}

TEST_CASE("santa estimate matches the worked example") {
  const auto v = Matrix::from_rows({{1, 2}, {3, 5}, {7, 11}});
  const auto out = santa_from_samples(v, SampleSet{{0, 0, 2}, Scheme::kMultinomial});
  CHECK(out.value[0] == doctest::Approx((1 + 1 + 7) / 3.0));
  CHECK(out.value[1] == doctest::Approx((2 + 2 + 11) / 3.0));
  CHECK(out.ledger.adds == 6);
  CHECK(out.ledger.mults_divs == 2);
  CHECK(out.ledger.value_element_reads == 6);
  CHECK(out.ledger.output_writes == 2);
  CHECK(out.ledger.unique_value_rows_group == 2);

  const auto prof = one_hot(3, 1);
  RngStream s(2);
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic}) {
    CHECK(santa_estimate(prof, v, 5, scheme, s).value == std::vector<double>{3, 5});
  }
}

TEST_CASE("santa mean within 4 sigma of dense (n=16, d=4, S=4)") {
  RngStream s(101);
  const auto q = test::gaussian_vector(4, s);
  const auto k = test::gaussian_matrix(16, 4, s);
  const auto v = test::gaussian_matrix(16, 4, s);
  const auto prof = WeightProfile::from_logits(scores(q, k, 0.5));
  const auto dense = dense_attention(prof, v).value;
  const std::size_t runs = 100000;
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic}) {
    const auto var = variance_diagonal(prof, v, 4, scheme);
    std::vector<double> mean(4, 0.0);
    RngStream r = s.child(Domain::kStratum, static_cast<std::uint64_t>(scheme));
    for (std::size_t i = 0; i < runs; ++i) {
      const auto est = santa_estimate(prof, v, 4, scheme, r).value;
      for (std::size_t c = 0; c < 4; ++c) mean[c] += est[c] / runs;
    }
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(mean[c] - dense[c]) <= 4.0 * std::sqrt(var[c] / runs) + 1e-12);
    }
  }
}

TEST_CASE("top-k examples") {
  RngStream s(7);
  const auto q = test::gaussian_vector(4, s);
  const auto k = test::gaussian_matrix(12, 4, s);
  const auto v = test::gaussian_matrix(12, 4, s);
  CHECK(topk_attention(q, k, v, 0.5, 12).value == dense_attention(q, k, v, 0.5).value);

  const auto prof = WeightProfile::from_probs(std::vector<double>{0.5, 0.3, 0.2});
  const auto vals = Matrix::from_rows({{1, 0}, {0, 1}, {5, 5}});
  const auto top1 = topk_attention(prof, vals, 1);
  CHECK(top1.value == std::vector<double>{1, 0});
  const auto top2 = topk_attention(prof, vals, 2);
  CHECK(top2.value[0] == doctest::Approx(0.5 / 0.8));
  CHECK(top2.value[1] == doctest::Approx(0.3 / 0.8));
  CHECK_THROWS(topk_attention(prof, vals, 0));
  CHECK_THROWS(topk_attention(prof, vals, 4));
  // Ties go to the lower index.
  CHECK(topk_indices(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("scheme names round trip") {
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic}) {
    CHECK(parse_scheme(to_string(scheme)) == scheme);
  }
  CHECK_THROWS(parse_scheme("bogus"));
}

}
