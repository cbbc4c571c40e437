#include "santa/golden.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace santa {

namespace {

double parse_double(std::string_view text, std::string_view what) {
  double out = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument(fmt::format("{}: '{}' is not a number", what, text));
  }
  return out;
}

struct ParsedKey {
  std::string column;
  std::vector<std::pair<std::string, std::string>> selectors;
};

ParsedKey parse_key(std::string_view key) {
  ParsedKey out;
  const auto open = key.find('[');
  if (open == std::string_view::npos) {
    out.column = key;
    return out;
  }
  if (key.back() != ']') throw std::invalid_argument(fmt::format("golden key '{}': missing ']'", key));
  out.column = key.substr(0, open);
  std::string_view body = key.substr(open + 1, key.size() - open - 2);
  while (!body.empty()) {
    const auto semi = body.find(';');
    const std::string_view item = body.substr(0, semi);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("golden key '{}': selector '{}' lacks '='", key, item));
    }
    out.selectors.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    if (semi == std::string_view::npos) break;
    body.remove_prefix(semi + 1);
  }
  return out;
}

// Numeric cells compare by value so "1.5" matches "1.50".
bool cell_matches(std::string_view cell, std::string_view wanted) {
  if (cell == wanted) return true;
  double a = 0.0, b = 0.0;
  const auto ra = std::from_chars(cell.data(), cell.data() + cell.size(), a);
  const auto rb = std::from_chars(wanted.data(), wanted.data() + wanted.size(), b);
  return ra.ec == std::errc{} && ra.ptr == cell.data() + cell.size() && rb.ec == std::errc{} &&
         rb.ptr == wanted.data() + wanted.size() && a == b;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kPublished: return "published";
    case Provenance::kAnalytic: return "analytic";
    case Provenance::kOracle: return "oracle";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "published") return Provenance::kPublished;
  if (name == "analytic") return Provenance::kAnalytic;
  if (name == "oracle") return Provenance::kOracle;
  throw std::invalid_argument(fmt::format("unknown provenance '{}'", name));
}

std::vector<GoldenRecord> parse_golden(const CsvTable& table) {
  for (const char* col : {"experiment", "key", "expected", "tolerance", "provenance", "source"}) {
    if (!table.has_column(col)) throw std::invalid_argument(fmt::format("golden file lacks column '{}'", col));
  }
  const auto ce = table.column("experiment"), ck = table.column("key"), cx = table.column("expected"),
             ct = table.column("tolerance"), cp = table.column("provenance"), cs = table.column("source");
  std::vector<GoldenRecord> out;
  for (const auto& row : table.rows) {
    GoldenRecord r;
    r.experiment = row[ce];
    r.key = row[ck];
    r.expected = parse_double(row[cx], "expected");
    r.tolerance = parse_double(row[ct], "tolerance");
    if (!(r.tolerance >= 0.0)) throw std::invalid_argument(fmt::format("golden '{}': negative tolerance", r.key));
    if (row[cp].empty()) throw std::invalid_argument(fmt::format("golden '{}': missing provenance", r.key));
    r.provenance = parse_provenance(row[cp]);
    r.source = row[cs];
    if (r.provenance == Provenance::kOracle && r.source.empty()) {
      throw std::invalid_argument(fmt::format("golden '{}': oracle values must name their script", r.key));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string GoldenReport::summary() const {
  std::string out = fmt::format("{} ({} checked, {} failed)", pass ? "PASS" : "FAIL", checked,
                                failures.size());
  for (const auto& f : failures) out += "\n  " + f;
  return out;
}

GoldenReport check_against_golden(const CsvTable& result, std::span<const GoldenRecord> golden,
                                  std::string_view experiment) {
  GoldenReport report;
  for (const auto& rec : golden) {
    if (rec.experiment != experiment) continue;
    const auto key = parse_key(rec.key);
    const std::size_t value_col = result.column(key.column);
    std::vector<std::pair<std::size_t, std::string>> sel;
    for (const auto& [col, val] : key.selectors) sel.emplace_back(result.column(col), val);

    const std::vector<std::string>* match = nullptr;
    std::size_t matches = 0;
    for (const auto& row : result.rows) {
      bool ok = true;
      for (const auto& [c, v] : sel) ok = ok && cell_matches(row[c], v);
      if (ok) {
        match = &row;
        ++matches;
      }
    }
    if (matches != 1) {
      throw std::invalid_argument(
          fmt::format("golden key '{}' matches {} rows, expected exactly 1", rec.key, matches));
    }
    ++report.checked;
    const double got = parse_double((*match)[value_col], rec.key);
    if (!(std::abs(got - rec.expected) <= rec.tolerance)) {
      report.pass = false;
      report.failures.push_back(fmt::format("{}: got {} expected {} +/- {} ({})", rec.key, got,
                                            rec.expected, rec.tolerance, to_string(rec.provenance)));
    }
  }
  if (report.checked == 0) {
    throw std::invalid_argument(fmt::format("no golden records for experiment '{}'", experiment));
  }
  return report;
}

}  // namespace santa
