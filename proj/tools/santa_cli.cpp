// santa: command-line front end for the experiment harness.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "json.hpp"
#include "santa/csv.hpp"
#include "santa/golden.hpp"
#include "santa/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kCheckFailed = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string precision;
  std::size_t threads = 0;
  std::string check;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON experiment config");
  sub->add_option("--seed", f.seed, "root seed (overrides the config)");
  sub->add_option("--out", f.out, "output directory (overrides the config)");
  sub->add_option("--precision", f.precision, "f64 or f32")->check(CLI::IsMember({"f64", "f32"}));
  sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--check", f.check, "golden CSV to compare results against");
}

santa::ExperimentConfig load_config(santa::ExperimentKind kind, const CommonFlags& f) {
  nlohmann::json doc = nlohmann::json::object();
  if (!f.config.empty()) {
    try {
      doc = nlohmann::json::parse(santa::read_text(f.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw santa::ConfigError("<file>", fmt::format("{}: {}", f.config, e.what()));
    } catch (const std::runtime_error& e) {
      throw santa::ConfigError("<file>", e.what());
    }
  }
  auto c = santa::parse_config(doc, kind, f.seed);
  if (!f.out.empty()) c.output = f.out;
  if (!f.precision.empty()) c.precision = santa::parse_precision(f.precision);
  if (f.threads > 0) c.threads = f.threads;
  return c;
}

// Applies every golden record addressed to this run; returns false on failure.
bool check_golden(const santa::ExperimentResult& result, santa::ExperimentKind kind,
                  const std::string& path) {
  const auto golden = santa::parse_golden(santa::read_csv(path));
  const std::string base(santa::to_string(kind));
  bool any = false, pass = true;
  for (std::size_t i = 0; i < result.tables.size(); ++i) {
    const auto& t = result.tables[i];
    for (const std::string& id : {base + "/" + t.name, i == 0 ? base : std::string()}) {
      if (id.empty()) continue;
      const bool has = std::any_of(golden.begin(), golden.end(),
                                   [&](const santa::GoldenRecord& r) { return r.experiment == id; });
      if (!has) continue;
      any = true;
      const auto report = santa::check_against_golden(t.table, golden, id);
      std::cout << fmt::format("check {}: {}\n", id, report.summary());
      pass = pass && report.pass;
    }
  }
  if (!any) throw santa::ConfigError("--check", fmt::format("no golden records for '{}' in {}", base, path));
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic sparse attention experiments"};
  app.set_version_flag("--version", std::string(SANTA_VERSION));
  app.require_subcommand(1);

  CommonFlags flags;
  for (auto kind : santa::all_experiment_kinds()) {
    auto* sub = app.add_subcommand(std::string(santa::to_string(kind)),
                                   fmt::format("run the {} experiment", santa::to_string(kind)));
    add_common(sub, flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  const auto kind = santa::parse_experiment_kind(app.get_subcommands().front()->get_name());

  santa::ExperimentConfig config;
  try {
    config = load_config(kind, flags);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const auto result = santa::run_experiment(config);
    santa::write_artifacts(result, config.output);
    std::cout << result.tables.front().table.to_string();
    std::cout << fmt::format("wrote {} (config {})\n", config.output, santa::config_hash(config));
    if (!flags.check.empty() && !check_golden(result, kind, flags.check)) return kCheckFailed;
  } catch (const santa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
