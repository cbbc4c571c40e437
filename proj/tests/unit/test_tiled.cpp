#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "santa/analysis.hpp"
#include "santa/numeric.hpp"
#include "santa/tiled.hpp"

using namespace santa;

TEST_SUITE("tiled") {

TEST_CASE("pass-1 statistics") {
  const auto p = test::gaussian_problem(40, 4, 2, 1, 3);
  const auto one = pass1_tile_stats(p, 64);
  REQUIRE(one.size() == 1);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto s = scores(p.query(h), p.keys_for(h), p.scale);
    const double m = *std::max_element(s.begin(), s.end());
    double l = 0.0;
    for (double x : s) l += std::exp(x - m);
    CHECK(one[0].max_score[h] == m);
    CHECK(std::abs(one[0].mass[h] - l) < 1e-12 * l);
  }

  const auto eq = test::logits_problem({{2.5, 2.5, 2.5, 2.5}}, 2, 1);
  for (const auto& t : pass1_tile_stats(eq, 2)) {
    CHECK(t.max_score[0] == 2.5);
    CHECK(t.mass[0] == 2.0);
  }

  // Global partition function oracle.
  const auto tiles = pass1_tile_stats(p, 7);
  CHECK(tiles.size() == 6);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto s = scores(p.query(h), p.keys_for(h), p.scale);
    double direct = 0.0;
    for (double x : s) direct += std::exp(x);
    double merged = 0.0;
    for (const auto& t : tiles) {
      merged += std::exp(t.max_score[h]) * t.mass[h];
      double sum = 0.0;
      for (double u : t.stash.row(h)) {
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
        sum += u;
      }
      CHECK(std::abs(sum - t.mass[h]) < 1e-10);
    }
    CHECK(std::abs(merged - direct) <= 1e-9 * direct);
  }
}

TEST_CASE("largest remainder apportionment") {
  CHECK(allocate_largest_remainder(std::vector<double>{0.5, 0.3, 0.2}, 10) == std::vector<std::int64_t>{5, 3, 2});
  CHECK(allocate_largest_remainder(std::vector<double>{0.55, 0.30, 0.15}, 10) == std::vector<std::int64_t>{6, 3, 1});
  CHECK(allocate_largest_remainder(std::vector<double>{3.7}, 9) == std::vector<std::int64_t>{9});
  CHECK(allocate_largest_remainder(std::vector<double>{1, 1, 1}, 2) == std::vector<std::int64_t>{1, 1, 0});
  CHECK_THROWS_WITH(allocate_largest_remainder(std::vector<double>{0, 0}, 3), "degenerate distribution");

  RngStream s(77);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> w(1 + s.below(20));
    for (double& x : w) x = s.uniform() < 0.2 ? 0.0 : std::exp(10.0 * s.normal());
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
    const auto budget = static_cast<std::int64_t>(1 + s.below(5000));
    const auto a = allocate_largest_remainder(w, budget);
    CHECK(std::accumulate(a.begin(), a.end(), std::int64_t{0}) == budget);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double quota = budget * w[i] / total;
      CHECK(a[i] >= std::floor(quota) - 1e-6);
      CHECK(a[i] <= std::ceil(quota) + 1e-6);
      if (w[i] == 0.0) CHECK(a[i] == 0);
    }
  }
}

TEST_CASE("systematic tile counts") {
  CHECK(systematic_tile_counts(std::vector<double>{1, 1, 1, 1}, 0.5, 0.25) ==
        std::vector<std::int64_t>{0, 1, 0, 1});
  CHECK(systematic_tile_counts(std::vector<double>{1, 1, 1}, 0.0, 0.5) == std::vector<std::int64_t>{0, 0, 0});
  for (double a0 : {0.0, 0.3, 0.999}) {
    CHECK(systematic_tile_counts(std::vector<double>{0.37}, 13 / 0.37, a0, 13) == std::vector<std::int64_t>{13});
  }
  CHECK_THROWS(systematic_tile_counts(std::vector<double>{1}, 1.0, 1.0));

  RngStream s(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> u(1 + s.below(256));
    for (double& x : u) x = std::exp(-4.0 * s.uniform());
    const double mass = std::accumulate(u.begin(), u.end(), 0.0);
    const auto budget = static_cast<std::int64_t>(1 + s.below(512));
    const auto c = systematic_tile_counts(u, budget / mass, s.uniform(), budget);
    CHECK(std::accumulate(c.begin(), c.end(), std::int64_t{0}) == budget);
    for (auto x : c) CHECK(x >= 0);
  }
}

TEST_CASE("budget plan conserves S for every head") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = test::gaussian_problem(300, 8, 4, 2, seed);
    const auto tiles = pass1_tile_stats(p, 32);
    const RngStream root(seed);
    const std::size_t budget = 1 + seed * 17;
    const auto plan = allocate_budgets_largest_remainder(tiles, budget, root);
    for (std::size_t h = 0; h < 4; ++h) {
      CHECK(std::accumulate(plan.budgets[h].begin(), plan.budgets[h].end(), std::int64_t{0}) ==
            static_cast<std::int64_t>(budget));
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        CHECK((plan.inv_density[h][t] == 0.0) == (plan.budgets[h][t] == 0));
        CHECK(plan.offsets[h][t] >= 0.0);
        CHECK(plan.offsets[h][t] < 1.0);
      }
    }
  }
  CHECK_THROWS_WITH(allocate_budgets_largest_remainder({}, 4, RngStream(1)), "degenerate distribution");
}

TEST_CASE("single-tile pipelines equal global systematic bit for bit") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto p = test::gaussian_problem(100, 8, 4, 2, 1000 + seed);
    const RngStream root(seed);
    const std::size_t budget = 1 + (seed * 37) % 300;
    const auto prop = prop_decode(p, 128, budget, root);
    const auto flash = flash_decode(p, 128, budget, root);
    for (std::size_t h = 0; h < 4; ++h) {
      RngStream aligned = root.child(Domain::kHead, h).child(Domain::kTile, 0);
      const auto global =
          santa_estimate(p.query(h), p.keys_for(h), p.values_for(h), p.scale, budget, Scheme::kSystematic, aligned);
      CHECK(prop.heads[h].value == global.value);
      CHECK(flash.heads[h].value == global.value);
      auto sorted = global.samples->indices;
      std::sort(sorted.begin(), sorted.end());
      CHECK(prop.heads[h].samples->indices == sorted);
    }
  }
}

TEST_CASE("prop ledger: mass in one tile leaves other tiles unread") {
  std::vector<double> logits(64, -800.0);
  logits[37] = 0.0;
  logits[40] = -0.5;
  const auto p = test::logits_problem({logits}, 2, 9);
  const auto out = prop_decode(p, 16, 50, RngStream(4));
  CHECK(out.ledger.unique_value_rows_group == 2);
  CHECK(out.ledger.value_element_reads == 2 * 2);
  CHECK(out.heads[0].ledger.adds == 50 * 2);
  CHECK(out.heads[0].ledger.value_element_reads == 50 * 2);
  CHECK(out.heads[0].ledger.mults_divs == 2);
  CHECK(out.ledger.stash_reads == 16);
  CHECK(out.ledger.key_element_reads == 64 * 2);
  CHECK(out.ledger.score_writes == 64);
}

TEST_CASE("GQA ledger counts the union of emitted rows once per KV head") {
  const auto p = test::gaussian_problem(200, 8, 4, 1, 12);
  const auto out = prop_decode(p, 64, 32, RngStream(8));
  std::vector<std::size_t> all;
  for (const auto& h : out.heads) all.insert(all.end(), h.samples->indices.begin(), h.samples->indices.end());
  std::sort(all.begin(), all.end());
  const auto unique = static_cast<std::uint64_t>(std::unique(all.begin(), all.end()) - all.begin());
  CHECK(out.ledger.unique_value_rows_group == unique);
  CHECK(out.ledger.value_element_reads == unique * 8);
  CHECK(out.ledger.adds == 4 * 32 * 8);
}

TEST_CASE("flash partials and merge") {
  std::vector<double> logits(32, -800.0);
  logits[5] = 0.0;
  const auto hot = test::logits_problem({logits}, 2, 10);
  const auto partial = flash_tile_partial(hot, 0, 16, 24, RngStream(1));
  CHECK(partial.partial(0, 0) == doctest::Approx(24 * hot.values[0](5, 0)));
  CHECK(partial.partial(0, 1) == doctest::Approx(24 * hot.values[0](5, 1)));
  CHECK_THROWS(flash_tile_partial(hot, 2, 16, 24, RngStream(1)));

  // Two identical tiles: weights cancel.
  TilePartial a;
  a.tile = 0;
  a.max_score = {1.5};
  a.mass = {2.0};
  a.partial = Matrix::from_rows({{8.0, -4.0}});
  TilePartial b = a;
  b.tile = 1;
  const std::vector<TilePartial> twins{a, b};
  const auto merged = flash_merge(twins, 4);
  CHECK(merged.heads[0].value[0] == doctest::Approx(2.0));
  CHECK(merged.heads[0].value[1] == doctest::Approx(-1.0));
  const std::vector<TilePartial> single{a};
  CHECK(flash_merge(single, 4).heads[0].value == std::vector<double>{2.0, -1.0});

  TilePartial dead = a;
  dead.mass = {0.0};
  const std::vector<TilePartial> deads{dead};
  CHECK_THROWS(flash_merge(deads, 4));

  // Partition function oracle.
  const auto p = test::gaussian_problem(500, 8, 2, 1, 44);
  std::vector<TilePartial> parts;
  for (std::size_t t = 0; t < tile_count(500, 64); ++t) parts.push_back(flash_tile_partial(p, t, 64, 8, RngStream(3)));
  const auto z = flash_partition_functions(parts);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto s = scores(p.query(h), p.keys_for(h), p.scale);
    const double m = *std::max_element(s.begin(), s.end());
    double direct = 0.0;
    for (double x : s) direct += std::exp(x - m);
    CHECK(std::abs(z[h] - direct) <= 1e-10 * direct);
  }
  for (const auto& part : parts) {
    // Each tile spends exactly its uniform budget.
    CHECK(part.ledger.adds == 2 * 8 * 8);
  }
}

TEST_CASE("flash consistency at large tile budgets") {
  std::vector<double> errs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = test::gaussian_problem(1024, 16, 1, 1, 5000 + seed);
    const auto dense = dense_attention(p.query(0), p.keys_for(0), p.values_for(0), p.scale).value;
    const auto out = flash_decode(p, 256, 4 * 4096, RngStream(seed));
    errs.push_back(fidelity(out.heads[0].value, dense).relative_l2);
  }
  std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
  CHECK(errs[50] < 0.02);
}

TEST_CASE("tile support statistic") {
  std::vector<double> p(1024, 0.0);
  for (std::size_t i = 0; i < 256; ++i) p[512 + i] = 1.0 / 256;
  CHECK(tile_support_statistic(WeightProfile::from_probs(p), 256, 0.9) == 1);
  CHECK(tile_support_statistic(WeightProfile::from_logits(std::vector<double>(1024, 0.0)), 256, 0.9) == 4);
  const auto masses = std::vector<double>{0.05, 0.6, 0.1, 0.25};
  std::vector<double> q;
  for (double m : masses)
    for (int i = 0; i < 4; ++i) q.push_back(m / 4);
  CHECK(tile_support_statistic(WeightProfile::from_probs(q), 4, 0.9) == 3);
  CHECK_THROWS(tile_support_statistic(WeightProfile::from_probs(q), 4, 1.0));
}

}
