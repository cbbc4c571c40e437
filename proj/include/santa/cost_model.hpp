#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace santa {

/// Scalar operation and element-traffic counts for one estimator run.
///
/// `adds`, `mults_divs`, `value_element_reads` and `output_writes` describe
/// the value stage (scores times V). `key_element_reads` and `score_writes`
/// describe the score stage: key elements read to form q.K and scores (or
/// stashed exponentials) written out. Value reads are charged per sample, so
/// a row drawn twice is charged twice; distinct rows are reported separately
/// in `unique_value_rows_group`. Softmax, sorting and sampling overheads are
/// not counted.
struct CostLedger {
  std::uint64_t adds = 0;
  std::uint64_t mults_divs = 0;
  std::uint64_t value_element_reads = 0;
  std::uint64_t key_element_reads = 0;
  std::uint64_t score_writes = 0;
  std::uint64_t output_writes = 0;
  std::uint64_t unique_value_rows_group = 0;
  // Re-reads of the score stash by tiled pipelines (one scalar per key).
  std::uint64_t stash_reads = 0;

  CostLedger& operator+=(const CostLedger& other);
  friend CostLedger operator+(CostLedger a, const CostLedger& b) { return a += b; }
  friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

enum class LedgerScheme { kSdpa, kTopK, kSanta };

std::string_view to_string(LedgerScheme scheme);
LedgerScheme parse_ledger_scheme(std::string_view name);

// Per-query, per-head decode costs. `budget` is S for SANTA and k for top-k
// (ignored for SDPA). Score stage: n_k*d_k key reads, n_k score writes.
CostLedger decode_ledger(LedgerScheme scheme, std::uint64_t n_keys, std::uint64_t head_dim,
                         std::uint64_t budget);

struct PrefillLedger {
  CostLedger score_stage;
  CostLedger value_stage;
};

// Per-head prefill costs. Score-stage reads use the loaded-once convention
// (n_q + n_k) * d_k, counted in key_element_reads.
PrefillLedger prefill_ledger(LedgerScheme scheme, std::uint64_t n_queries,
                             std::uint64_t n_keys, std::uint64_t head_dim,
                             std::uint64_t budget);

// Fraction of value-stage adds and reads a SANTA decode needs relative to SDPA.
double santa_value_stage_ratio(std::uint64_t budget, std::uint64_t n_keys);

// min(1, G*S/n_k): distinct value rows a GQA group touches when its queries
// sample disjoint rows.
double gqa_union_worst_case(std::uint64_t budget, std::uint64_t group_size,
                            std::uint64_t n_keys);

struct BandwidthScenario {
  double weight_bytes;  // per decode step (any unit, e.g. GB)
  double kv_bytes;      // per decode step, same unit
  double kv_speedup;    // speedup of the KV-bound attention kernel, >= 1
};

// 1 / (w/(w+kv) + (kv/(w+kv)) / s_kv)
double amdahl_decode_speedup(const BandwidthScenario& scenario);

struct LedgerFieldDiff {
  std::string field;
  std::uint64_t expected;
  std::uint64_t measured;
};

struct LedgerCheck {
  bool pass = true;
  std::vector<LedgerFieldDiff> diffs;
  // Reported, not compared: the symbolic model has no distinct-row term.
  std::uint64_t unique_value_rows_group = 0;

  std::string summary() const;
};

LedgerCheck measured_ledger_check(const CostLedger& measured, const CostLedger& expected);

// Fixed CSV column order for ledger rows.
std::string ledger_csv_header();
std::string ledger_csv_row(std::string_view scheme, std::uint64_t n_keys,
                           std::uint64_t head_dim, std::uint64_t budget,
                           const CostLedger& ledger);

}  // namespace santa
