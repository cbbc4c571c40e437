#include "santa/cost_model.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace santa {

CostLedger& CostLedger::operator+=(const CostLedger& other) {
  adds += other.adds;
  mults_divs += other.mults_divs;
  value_element_reads += other.value_element_reads;
  key_element_reads += other.key_element_reads;
  score_writes += other.score_writes;
  output_writes += other.output_writes;
  unique_value_rows_group += other.unique_value_rows_group;
  stash_reads += other.stash_reads;
  return *this;
}

std::string_view to_string(LedgerScheme scheme) {
  switch (scheme) {
    case LedgerScheme::kSdpa: return "sdpa";
    case LedgerScheme::kTopK: return "topk";
    case LedgerScheme::kSanta: return "santa";
  }
  return "unknown";
}

LedgerScheme parse_ledger_scheme(std::string_view name) {
  if (name == "sdpa") return LedgerScheme::kSdpa;
  if (name == "topk") return LedgerScheme::kTopK;
  if (name == "santa") return LedgerScheme::kSanta;
  throw std::invalid_argument(fmt::format("unknown ledger scheme '{}'", name));
}

CostLedger decode_ledger(LedgerScheme scheme, std::uint64_t n_keys, std::uint64_t head_dim,
                         std::uint64_t budget) {
  if (n_keys == 0 || head_dim == 0) {
    throw std::invalid_argument("decode_ledger: n_keys and head_dim must be >= 1");
  }
  CostLedger l;
  l.key_element_reads = n_keys * head_dim;
  l.score_writes = n_keys;
  l.output_writes = head_dim;
  switch (scheme) {
    case LedgerScheme::kSdpa:
      l.adds = l.mults_divs = l.value_element_reads = n_keys * head_dim;
      break;
    case LedgerScheme::kTopK:
      if (budget == 0 || budget > n_keys) throw std::invalid_argument("decode_ledger: k out of range");
      l.adds = l.mults_divs = l.value_element_reads = budget * head_dim;
      break;
    case LedgerScheme::kSanta:
      if (budget == 0) throw std::invalid_argument("decode_ledger: empty budget");
      l.adds = budget * head_dim;
      l.mults_divs = head_dim;
      l.value_element_reads = budget * head_dim;
      break;
  }
  return l;
}

PrefillLedger prefill_ledger(LedgerScheme scheme, std::uint64_t n_queries,
                             std::uint64_t n_keys, std::uint64_t head_dim,
                             std::uint64_t budget) {
  if (n_queries == 0) throw std::invalid_argument("prefill_ledger: n_queries must be >= 1");
  PrefillLedger p;
  p.score_stage.adds = n_queries * n_keys * head_dim;
  p.score_stage.mults_divs = n_queries * n_keys * head_dim;
  p.score_stage.key_element_reads = (n_queries + n_keys) * head_dim;
  p.score_stage.score_writes = n_queries * n_keys;

  CostLedger per_query = decode_ledger(scheme, n_keys, head_dim, budget);
  p.value_stage.adds = n_queries * per_query.adds;
  p.value_stage.mults_divs = n_queries * per_query.mults_divs;
  p.value_stage.value_element_reads = n_queries * per_query.value_element_reads;
  p.value_stage.output_writes = n_queries * head_dim;
  return p;
}

double santa_value_stage_ratio(std::uint64_t budget, std::uint64_t n_keys) {
  const auto santa = decode_ledger(LedgerScheme::kSanta, n_keys, 1, budget);
  const auto sdpa = decode_ledger(LedgerScheme::kSdpa, n_keys, 1, budget);
  return static_cast<double>(santa.value_element_reads) /
         static_cast<double>(sdpa.value_element_reads);
}

double gqa_union_worst_case(std::uint64_t budget, std::uint64_t group_size,
                            std::uint64_t n_keys) {
  if (budget == 0 || group_size == 0 || n_keys == 0) {
    throw std::invalid_argument("gqa_union_worst_case: parameters must be >= 1");
  }
  return std::min(1.0, static_cast<double>(group_size * budget) / static_cast<double>(n_keys));
}

double amdahl_decode_speedup(const BandwidthScenario& s) {
  if (!(s.weight_bytes > 0.0) || !(s.kv_bytes > 0.0) || !(s.kv_speedup >= 1.0)) {
    throw std::invalid_argument(
        "amdahl: traffic must be positive and the KV speedup at least 1");
  }
  const double total = s.weight_bytes + s.kv_bytes;
  return 1.0 / (s.weight_bytes / total + (s.kv_bytes / total) / s.kv_speedup);
}

std::string LedgerCheck::summary() const {
  if (pass) return "ledger match";
  std::string out = "ledger mismatch:";
  for (const auto& d : diffs) {
    out += fmt::format(" {} expected={} measured={};", d.field, d.expected, d.measured);
  }
  return out;
}

LedgerCheck measured_ledger_check(const CostLedger& measured, const CostLedger& expected) {
  LedgerCheck check;
  check.unique_value_rows_group = measured.unique_value_rows_group;
  auto compare = [&](const char* name, std::uint64_t e, std::uint64_t m) {
    if (e != m) {
      check.pass = false;
      check.diffs.push_back({name, e, m});
    }
  };
  compare("adds", expected.adds, measured.adds);
  compare("mults_divs", expected.mults_divs, measured.mults_divs);
  compare("value_reads", expected.value_element_reads, measured.value_element_reads);
  compare("key_reads", expected.key_element_reads, measured.key_element_reads);
  compare("score_writes", expected.score_writes, measured.score_writes);
  compare("output_writes", expected.output_writes, measured.output_writes);
  return check;
}

std::string ledger_csv_header() {
  return "scheme,n_k,d_k,S,adds,mults_divs,value_reads,key_reads,score_writes,output_writes,"
         "unique_rows_group";
}

std::string ledger_csv_row(std::string_view scheme, std::uint64_t n_keys,
                           std::uint64_t head_dim, std::uint64_t budget,
                           const CostLedger& l) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", scheme, n_keys, head_dim, budget,
                     l.adds, l.mults_divs, l.value_element_reads, l.key_element_reads,
                     l.score_writes, l.output_writes, l.unique_value_rows_group);
}

}  // namespace santa
