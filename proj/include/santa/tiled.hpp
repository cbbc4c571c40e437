#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "santa/cost_model.hpp"
#include "santa/estimators.hpp"
#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa {

inline constexpr std::size_t kDefaultTileSize = 256;
// Tile masses below this are treated as empty (subnormal boundary of double).
inline constexpr double kTinyTileMass = 1e-300;

/// Pass-1 statistics of one key tile [begin, end) for every query head.
struct TileSummary {
  std::size_t index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<double> max_score;  // per head: max score in the tile
  std::vector<double> mass;       // per head: sum of exp(score - max_score)
  Matrix stash;                   // n_heads x tile length: exp(score - max_score)

  std::size_t length() const { return end - begin; }
};

/// Per-(head, tile) integer budgets and systematic sampling parameters.
struct SampleBudgetPlan {
  std::size_t total_budget = 0;
  std::vector<std::vector<std::int64_t>> budgets;  // [head][tile]
  std::vector<std::vector<double>> inv_density;    // [head][tile]
  std::vector<std::vector<double>> offsets;        // [head][tile], in [0, 1)
  std::vector<std::vector<double>> weights;        // [head][tile], exp(m_t - m*) * mass
  std::vector<double> head_max;                    // [head]
};

/// Per-tile output of the speculative pipeline.
struct TilePartial {
  std::size_t tile = 0;
  std::size_t tile_budget = 0;
  std::vector<double> max_score;  // per head
  std::vector<double> mass;       // per head
  Matrix partial;                 // n_heads x head_dim, unnormalized count-weighted row sums
  CostLedger ledger;
  std::vector<CostLedger> head_ledgers;  // per head, per-sample charges
};

struct PipelineOutput {
  std::vector<EstimatorOutput> heads;
  // Whole-step ledger. Value reads count the rows actually gathered per
  // KV head (a row emitted by several heads of a group is read once).
  CostLedger ledger;
};

std::size_t tile_count(std::size_t n_keys, std::size_t tile_size);

// Scores, per-tile max/mass and the exponential stash, for every head.
std::vector<TileSummary> pass1_tile_stats(const AttentionProblem& problem,
                                          std::size_t tile_size);

// Largest-remainder apportionment of `budget` proportional to `weights`.
// Ties in the fractional part go to the lower index.
std::vector<std::int64_t> allocate_largest_remainder(std::span<const double> weights,
                                                     std::int64_t budget);

// Offsets come from stream.child(head).child(tile); see tile_offset().
SampleBudgetPlan allocate_budgets_largest_remainder(std::span<const TileSummary> summaries,
                                                    std::size_t budget,
                                                    const RngStream& stream);

// Systematic offset for (head, tile): a0 = 1 - u reflected into [0, 1),
// with u the first uniform on stream/head/tile. This reflection makes a
// single-tile run select exactly the thresholds (m + u)/S that global
// systematic sampling draws from the same stream path.
double tile_offset(const RngStream& stream, std::size_t head, std::size_t tile);

// Counts c_n = floor(a0 + P_n + x_n) - floor(a0 + P_n) with x_n = inv_density * u_n
// and P_n the running sum of x.
std::vector<std::int64_t> systematic_tile_counts(std::span<const double> stash,
                                                 double inv_density, double offset);
// Same, then nudges the last emitting element so the counts sum to `budget`
// when floating-point drift in the running sum lost or gained one crossing.
std::vector<std::int64_t> systematic_tile_counts(std::span<const double> stash,
                                                 double inv_density, double offset,
                                                 std::int64_t budget);

// Proportional-allocation pipeline: pass 1, global budgets, pass 2.
PipelineOutput prop_decode(const AttentionProblem& problem, std::size_t tile_size,
                           std::size_t budget, const RngStream& stream);

// Uniform per-tile budget used by the speculative pipeline: round(S/T), >= 1.
std::size_t flash_tile_budget(std::size_t budget, std::size_t n_tiles);

TilePartial flash_tile_partial(const AttentionProblem& problem, std::size_t tile,
                               std::size_t tile_size, std::size_t tile_budget,
                               const RngStream& stream);

PipelineOutput flash_merge(std::span<const TilePartial> partials, std::size_t tile_budget);

// Per-head partition function sum_t exp(m_t - m*) * mass_t over partials.
std::vector<double> flash_partition_functions(std::span<const TilePartial> partials);

PipelineOutput flash_decode(const AttentionProblem& problem, std::size_t tile_size,
                            std::size_t budget, const RngStream& stream);

// Minimal number of tiles, heaviest first, whose mass reaches the threshold.
std::size_t tile_support_statistic(const WeightProfile& profile, std::size_t tile_size,
                                   double mass_threshold);

}  // namespace santa
