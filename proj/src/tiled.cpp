#include "santa/tiled.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "santa/numeric.hpp"

namespace santa {

namespace {

void require_tile_size(std::size_t tile_size) {
  if (tile_size == 0) throw std::invalid_argument("tile size must be >= 1");
}

std::size_t tile_begin(std::size_t tile, std::size_t tile_size) { return tile * tile_size; }

std::size_t tile_end(std::size_t tile, std::size_t tile_size, std::size_t n_keys) {
  return std::min((tile + 1) * tile_size, n_keys);
}

// Tile-local exponentials for one head: returns max score, fills u, returns mass.
struct TileScores {
  double max_score;
  double mass;
};

TileScores tile_exponentials(const AttentionProblem& problem, std::size_t head,
                             std::size_t begin, std::size_t end, std::span<double> u) {
  const auto q = problem.query(head);
  const Matrix& keys = problem.keys_for(head);
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t n = begin; n < end; ++n) {
    u[n - begin] = dot(q, keys.row(n)) * problem.scale;
    max_score = std::max(max_score, u[n - begin]);
  }
  double mass = 0.0;
  for (double& x : u) {
    x = std::exp(x - max_score);
    mass += x;
  }
  return {max_score, mass};
}

// Adds row `n` of `values` into `acc` `count` times (gather-and-add, no multiply).
void add_repeated(std::span<double> acc, std::span<const double> row, std::int64_t count) {
  for (std::int64_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += row[c];
  }
}

// Gathers one KV head's tile: for every row with a nonzero count in any head
// of the group, adds it into each head's accumulator. Returns emitted rows.
std::uint64_t gather_tile(const AttentionProblem& problem, std::size_t kv_head,
                          std::size_t begin,
                          const std::vector<std::vector<std::int64_t>>& group_counts,
                          std::vector<std::vector<double>>& acc,
                          std::vector<CostLedger>& head_ledgers,
                          std::vector<std::vector<std::size_t>>& head_indices) {
  const std::size_t group = problem.geometry.group_size();
  const std::size_t d = problem.geometry.head_dim();
  const Matrix& values = problem.values[kv_head];
  const std::size_t length = group_counts.empty() ? 0 : group_counts.front().size();
  std::uint64_t emitted = 0;
  for (std::size_t i = 0; i < length; ++i) {
    bool any = false;
    for (std::size_t g = 0; g < group; ++g) any = any || group_counts[g][i] > 0;
    if (!any) continue;
    ++emitted;
    const auto row = values.row(begin + i);
    for (std::size_t g = 0; g < group; ++g) {
      const std::int64_t c = group_counts[g][i];
      if (c <= 0) continue;
      const std::size_t h = kv_head * group + g;
      add_repeated(acc[h], row, c);
      head_ledgers[h].adds += static_cast<std::uint64_t>(c) * d;
      head_ledgers[h].value_element_reads += static_cast<std::uint64_t>(c) * d;
      head_ledgers[h].unique_value_rows_group += 1;
      for (std::int64_t r = 0; r < c; ++r) head_indices[h].push_back(begin + i);
    }
  }
  return emitted;
}

}  // namespace

std::size_t tile_count(std::size_t n_keys, std::size_t tile_size) {
  require_tile_size(tile_size);
  return (n_keys + tile_size - 1) / tile_size;
}

std::vector<TileSummary> pass1_tile_stats(const AttentionProblem& problem,
                                          std::size_t tile_size) {
  problem.validate();
  const std::size_t n_keys = problem.n_keys();
  const std::size_t n_tiles = tile_count(n_keys, tile_size);
  const std::size_t n_heads = problem.geometry.n_heads();
  std::vector<TileSummary> out(n_tiles);
  for (std::size_t t = 0; t < n_tiles; ++t) {
    TileSummary& s = out[t];
    s.index = t;
    s.begin = tile_begin(t, tile_size);
    s.end = tile_end(t, tile_size, n_keys);
    s.max_score.resize(n_heads);
    s.mass.resize(n_heads);
    s.stash = Matrix(n_heads, s.length());
    for (std::size_t h = 0; h < n_heads; ++h) {
      const auto stats = tile_exponentials(problem, h, s.begin, s.end, s.stash.row(h));
      s.max_score[h] = stats.max_score;
      s.mass[h] = stats.mass;
    }
  }
  return out;
}

std::vector<std::int64_t> allocate_largest_remainder(std::span<const double> weights,
                                                     std::int64_t budget) {
  if (weights.empty()) throw std::invalid_argument("largest remainder: no weights");
  if (budget < 0) throw std::invalid_argument("largest remainder: negative budget");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("largest remainder: weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("degenerate distribution");

  const std::size_t n = weights.size();
  std::vector<std::int64_t> out(n);
  // Fractions are compared on a 1e-12 grid so that quotas equal up to
  // rounding count as ties (broken toward the lower index).
  std::vector<std::int64_t> fraction_key(n);
  std::int64_t assigned = 0;
  for (std::size_t t = 0; t < n; ++t) {
    double quota = static_cast<double>(budget) * weights[t] / total;
    const double nearest = std::nearbyint(quota);
    if (std::abs(quota - nearest) <= 1e-9 * std::max(1.0, quota)) quota = nearest;
    const double floor_q = std::floor(quota);
    out[t] = static_cast<std::int64_t>(floor_q);
    fraction_key[t] = std::llround((quota - floor_q) * 1e12);
    assigned += out[t];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fraction_key[a] > fraction_key[b];
  });
  for (std::int64_t r = 0; r < budget - assigned; ++r) {
    out[order[static_cast<std::size_t>(r) % n]] += 1;
  }
  return out;
}

double tile_offset(const RngStream& stream, std::size_t head, std::size_t tile) {
  RngStream s = stream.child(Domain::kHead, head).child(Domain::kTile, tile);
  const double u = s.uniform();
  return u == 0.0 ? 0.0 : 1.0 - u;
}

SampleBudgetPlan allocate_budgets_largest_remainder(std::span<const TileSummary> summaries,
                                                    std::size_t budget,
                                                    const RngStream& stream) {
  if (budget == 0) throw std::invalid_argument("empty budget");
  if (summaries.empty()) throw std::invalid_argument("degenerate distribution");
  const std::size_t n_heads = summaries.front().max_score.size();
  const std::size_t n_tiles = summaries.size();
  SampleBudgetPlan plan;
  plan.total_budget = budget;
  plan.budgets.assign(n_heads, std::vector<std::int64_t>(n_tiles, 0));
  plan.inv_density.assign(n_heads, std::vector<double>(n_tiles, 0.0));
  plan.offsets.assign(n_heads, std::vector<double>(n_tiles, 0.0));
  plan.weights.assign(n_heads, std::vector<double>(n_tiles, 0.0));
  plan.head_max.assign(n_heads, -std::numeric_limits<double>::infinity());

  for (std::size_t h = 0; h < n_heads; ++h) {
    bool any_mass = false;
    for (const auto& s : summaries) {
      if (s.mass[h] > 0.0) {
        any_mass = true;
        plan.head_max[h] = std::max(plan.head_max[h], s.max_score[h]);
      }
    }
    if (!any_mass) throw std::invalid_argument("degenerate distribution");
    for (std::size_t t = 0; t < n_tiles; ++t) {
      const auto& s = summaries[t];
      plan.weights[h][t] = s.mass[h] > 0.0 ? std::exp(s.max_score[h] - plan.head_max[h]) * s.mass[h]
                                           : 0.0;
    }
    plan.budgets[h] = allocate_largest_remainder(plan.weights[h], static_cast<std::int64_t>(budget));
    for (std::size_t t = 0; t < n_tiles; ++t) {
      const double mass = summaries[t].mass[h];
      plan.inv_density[h][t] =
          plan.budgets[h][t] > 0 && mass >= kTinyTileMass
              ? static_cast<double>(plan.budgets[h][t]) / mass
              : 0.0;
      plan.offsets[h][t] = tile_offset(stream, h, t);
    }
  }
  return plan;
}

std::vector<std::int64_t> systematic_tile_counts(std::span<const double> stash,
                                                 double inv_density, double offset) {
  if (!(inv_density >= 0.0)) throw std::invalid_argument("inverse density must be >= 0");
  if (!(offset >= 0.0 && offset < 1.0)) throw std::invalid_argument("offset must be in [0, 1)");
  std::vector<std::int64_t> counts(stash.size(), 0);
  if (inv_density == 0.0) return counts;
  double running = 0.0;
  for (std::size_t n = 0; n < stash.size(); ++n) {
    const double x = inv_density * stash[n];
    const double base = offset + running;
    counts[n] = static_cast<std::int64_t>(std::floor(base + x) - std::floor(base));
    running += x;
  }
  return counts;
}

std::vector<std::int64_t> systematic_tile_counts(std::span<const double> stash,
                                                 double inv_density, double offset,
                                                 std::int64_t budget) {
  auto counts = systematic_tile_counts(stash, inv_density, offset);
  std::int64_t delta = budget - std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  for (std::size_t i = counts.size(); delta != 0 && i-- > 0;) {
    if (delta > 0 && inv_density * stash[i] > 0.0) {
      counts[i] += delta;
      delta = 0;
    } else if (delta < 0 && counts[i] > 0) {
      const std::int64_t take = std::min(counts[i], -delta);
      counts[i] -= take;
      delta += take;
    }
  }
  return counts;
}

PipelineOutput prop_decode(const AttentionProblem& problem, std::size_t tile_size,
                           std::size_t budget, const RngStream& stream) {
  const auto summaries = pass1_tile_stats(problem, tile_size);
  const auto plan = allocate_budgets_largest_remainder(summaries, budget, stream);

  const auto& geo = problem.geometry;
  const std::size_t d = geo.head_dim();
  const std::size_t n_keys = problem.n_keys();
  std::vector<std::vector<double>> acc(geo.n_heads(), std::vector<double>(d, 0.0));
  std::vector<CostLedger> head_ledgers(geo.n_heads());
  std::vector<std::vector<std::size_t>> head_indices(geo.n_heads());

  PipelineOutput out;
  out.ledger.key_element_reads = geo.n_kv_heads() * n_keys * d;
  out.ledger.score_writes = geo.n_heads() * n_keys;
  for (auto& l : head_ledgers) {
    l.key_element_reads = n_keys * d;
    l.score_writes = n_keys;
  }

  for (std::size_t k = 0; k < geo.n_kv_heads(); ++k) {
    for (const auto& tile : summaries) {
      std::vector<std::vector<std::int64_t>> group_counts(geo.group_size());
      for (std::size_t g = 0; g < geo.group_size(); ++g) {
        const std::size_t h = k * geo.group_size() + g;
        const std::int64_t tile_budget = plan.budgets[h][tile.index];
        if (tile_budget == 0) {
          group_counts[g].assign(tile.length(), 0);
          continue;
        }
        group_counts[g] = systematic_tile_counts(tile.stash.row(h),
                                                 plan.inv_density[h][tile.index],
                                                 plan.offsets[h][tile.index], tile_budget);
        head_ledgers[h].stash_reads += tile.length();
        out.ledger.stash_reads += tile.length();
      }
      const std::uint64_t emitted =
          gather_tile(problem, k, tile.begin, group_counts, acc, head_ledgers, head_indices);
      out.ledger.value_element_reads += emitted * d;
      out.ledger.unique_value_rows_group += emitted;
    }
  }

  const double inv_budget = 1.0 / static_cast<double>(budget);
  out.heads.resize(geo.n_heads());
  for (std::size_t h = 0; h < geo.n_heads(); ++h) {
    for (double& x : acc[h]) x *= inv_budget;
    head_ledgers[h].mults_divs += d;
    head_ledgers[h].output_writes += d;
    out.ledger.adds += head_ledgers[h].adds;
    out.ledger.mults_divs += d;
    out.ledger.output_writes += d;
    out.heads[h] = EstimatorOutput{std::move(acc[h]), head_ledgers[h],
                                   SampleSet{std::move(head_indices[h]), Scheme::kSystematic}};
  }
  return out;
}

std::size_t flash_tile_budget(std::size_t budget, std::size_t n_tiles) {
  if (budget == 0) throw std::invalid_argument("empty budget");
  if (n_tiles == 0) throw std::invalid_argument("no tiles");
  const auto rounded = static_cast<std::size_t>(
      std::llround(static_cast<double>(budget) / static_cast<double>(n_tiles)));
  return std::max<std::size_t>(1, rounded);
}

TilePartial flash_tile_partial(const AttentionProblem& problem, std::size_t tile,
                               std::size_t tile_size, std::size_t tile_budget,
                               const RngStream& stream) {
  problem.validate();
  if (tile_budget == 0) throw std::invalid_argument("empty budget");
  const std::size_t n_keys = problem.n_keys();
  if (tile >= tile_count(n_keys, tile_size)) throw std::out_of_range("tile index out of range");
  const auto& geo = problem.geometry;
  const std::size_t d = geo.head_dim();
  const std::size_t begin = tile_begin(tile, tile_size);
  const std::size_t end = tile_end(tile, tile_size, n_keys);

  TilePartial out;
  out.tile = tile;
  out.tile_budget = tile_budget;
  out.max_score.resize(geo.n_heads());
  out.mass.resize(geo.n_heads());
  out.partial = Matrix(geo.n_heads(), d);

  std::vector<std::vector<double>> acc(geo.n_heads(), std::vector<double>(d, 0.0));
  std::vector<CostLedger> head_ledgers(geo.n_heads());
  std::vector<std::vector<std::size_t>> head_indices(geo.n_heads());
  std::vector<double> u(end - begin);

  for (std::size_t k = 0; k < geo.n_kv_heads(); ++k) {
    out.ledger.key_element_reads += (end - begin) * d;
    std::vector<std::vector<std::int64_t>> group_counts(geo.group_size());
    for (std::size_t g = 0; g < geo.group_size(); ++g) {
      const std::size_t h = k * geo.group_size() + g;
      const auto stats = tile_exponentials(problem, h, begin, end, u);
      out.max_score[h] = stats.max_score;
      out.mass[h] = stats.mass;
      const double inv_density =
          stats.mass < kTinyTileMass ? 0.0 : static_cast<double>(tile_budget) / stats.mass;
      group_counts[g] = systematic_tile_counts(
          u, inv_density, tile_offset(stream, h, tile),
          inv_density > 0.0 ? static_cast<std::int64_t>(tile_budget) : 0);
    }
    const std::uint64_t emitted =
        gather_tile(problem, k, begin, group_counts, acc, head_ledgers, head_indices);
    out.ledger.value_element_reads += emitted * d;
    out.ledger.unique_value_rows_group += emitted;
  }
  for (std::size_t h = 0; h < geo.n_heads(); ++h) {
    std::copy(acc[h].begin(), acc[h].end(), out.partial.row(h).begin());
    out.ledger.adds += head_ledgers[h].adds;
  }
  out.head_ledgers = std::move(head_ledgers);
  return out;
}

std::vector<double> flash_partition_functions(std::span<const TilePartial> partials) {
  if (partials.empty()) throw std::invalid_argument("flash merge: no partials");
  const std::size_t n_heads = partials.front().max_score.size();
  std::vector<double> z(n_heads, 0.0);
  for (std::size_t h = 0; h < n_heads; ++h) {
    double head_max = -std::numeric_limits<double>::infinity();
    for (const auto& p : partials) {
      if (p.mass[h] > 0.0) head_max = std::max(head_max, p.max_score[h]);
    }
    for (const auto& p : partials) {
      if (p.mass[h] > 0.0) z[h] += std::exp(p.max_score[h] - head_max) * p.mass[h];
    }
  }
  return z;
}

PipelineOutput flash_merge(std::span<const TilePartial> partials, std::size_t tile_budget) {
  if (partials.empty()) throw std::invalid_argument("flash merge: no partials");
  if (tile_budget == 0) throw std::invalid_argument("empty budget");
  const std::size_t n_heads = partials.front().max_score.size();
  const std::size_t d = partials.front().partial.cols();
  const double inv_tile_budget = 1.0 / static_cast<double>(tile_budget);

  PipelineOutput out;
  for (const auto& p : partials) out.ledger += p.ledger;
  out.heads.resize(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    double head_max = -std::numeric_limits<double>::infinity();
    for (const auto& p : partials) {
      if (p.mass[h] > 0.0) head_max = std::max(head_max, p.max_score[h]);
    }
    std::vector<double> weights(partials.size(), 0.0);
    double z = 0.0;
    for (std::size_t t = 0; t < partials.size(); ++t) {
      const auto& p = partials[t];
      if (p.mass[h] > 0.0) weights[t] = std::exp(p.max_score[h] - head_max) * p.mass[h];
      z += weights[t];
    }
    if (!(z > 0.0) || !std::isfinite(z)) {
      throw std::invalid_argument("flash merge: all partials degenerate");
    }
    EstimatorOutput head{std::vector<double>(d, 0.0), {}, std::nullopt};
    for (const auto& p : partials) {
      if (h < p.head_ledgers.size()) head.ledger += p.head_ledgers[h];
    }
    const CostLedger sampled = head.ledger;
    for (std::size_t t = 0; t < partials.size(); ++t) {
      const double coef = (weights[t] / z) * inv_tile_budget;
      const auto row = partials[t].partial.row(h);
      for (std::size_t c = 0; c < d; ++c) head.value[c] += coef * row[c];
      head.ledger.mults_divs += d;
      head.ledger.adds += d;
    }
    head.ledger.output_writes = d;
    out.ledger.mults_divs += head.ledger.mults_divs - sampled.mults_divs;
    out.ledger.adds += head.ledger.adds - sampled.adds;
    out.ledger.output_writes += d;
    out.heads[h] = std::move(head);
  }
  return out;
}

PipelineOutput flash_decode(const AttentionProblem& problem, std::size_t tile_size,
                            std::size_t budget, const RngStream& stream) {
  problem.validate();
  const std::size_t n_tiles = tile_count(problem.n_keys(), tile_size);
  const std::size_t tile_budget = flash_tile_budget(budget, n_tiles);
  std::vector<TilePartial> partials;
  partials.reserve(n_tiles);
  for (std::size_t t = 0; t < n_tiles; ++t) {
    partials.push_back(flash_tile_partial(problem, t, tile_size, tile_budget, stream));
  }
  return flash_merge(partials, tile_budget);
}

std::size_t tile_support_statistic(const WeightProfile& profile, std::size_t tile_size,
                                   double mass_threshold) {
  require_tile_size(tile_size);
  if (!(mass_threshold > 0.0 && mass_threshold < 1.0)) {
    throw std::invalid_argument("mass threshold must be in (0, 1)");
  }
  const auto probs = profile.probs();
  const std::size_t n_tiles = tile_count(probs.size(), tile_size);
  std::vector<double> masses(n_tiles, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) masses[i / tile_size] += probs[i];
  std::sort(masses.begin(), masses.end(), std::greater<>());
  double covered = 0.0;
  for (std::size_t t = 0; t < n_tiles; ++t) {
    covered += masses[t];
    if (covered >= mass_threshold) return t + 1;
  }
  return n_tiles;
}

}  // namespace santa
