#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "santa/csv.hpp"

namespace santa {

// Where an expected value comes from: a number quoted in the publication,
// a closed-form or trivially exact value, or a brute-force oracle script.
enum class Provenance { kPublished, kAnalytic, kOracle };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view name);

/// One expected value. `key` addresses a cell of a result table as
/// `column[selector=value;...]`; an empty selector list requires a
/// single-row table.
struct GoldenRecord {
  std::string experiment;  // "<kind>" or "<kind>/<table>"
  std::string key;
  double expected = 0.0;
  double tolerance = 0.0;
  Provenance provenance = Provenance::kAnalytic;
  std::string source;
};

// Columns: experiment,key,expected,tolerance,provenance,source.
std::vector<GoldenRecord> parse_golden(const CsvTable& table);

struct GoldenReport {
  bool pass = true;
  std::size_t checked = 0;
  std::vector<std::string> failures;
  std::string summary() const;
};

// Checks every record whose experiment equals `experiment` against `result`.
// Throws on schema mismatch (missing column, unmatched selector, no records).
GoldenReport check_against_golden(const CsvTable& result, std::span<const GoldenRecord> golden,
                                  std::string_view experiment);

}  // namespace santa
