#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "santa/cost_model.hpp"
#include "santa/csv.hpp"
#include "santa/estimators.hpp"
#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa {

/// Invalid configuration; `key()` names the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class ExperimentKind {
  kEstimate,
  kVarianceSweep,
  kBernoulliErrorSweep,
  kUniqueRows,
  kUniqueKeys,
  kCostReport,
  kAmdahl,
  kPipelineFidelity,
  kRlTrain,
};

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);
std::span<const ExperimentKind> all_experiment_kinds();

enum class Distribution { kGaussian, kZipfLogits, kOneHot, kTemperatureScaled, kUniform };

std::string_view to_string(Distribution d);
Distribution parse_distribution(std::string_view name);

enum class Precision { kF64, kF32 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view name);

struct ProblemSpec {
  std::size_t n_keys = 64;
  std::size_t head_dim = 8;
  std::size_t n_heads = 1;
  std::size_t n_kv_heads = 1;
  Distribution distribution = Distribution::kGaussian;
  double zipf_exponent = 1.0;
  double temperature = 0.5;
};

struct RlSettings {
  std::size_t layers = 28;
  std::size_t total_budget = 224;
  double learning_rate = 0.02;
  std::size_t episodes_per_batch = 10;
  std::size_t workers = 1;
  std::size_t iterations = 500;
  double noise = 0.05;
  double kappa = 0.0;  // 0 means N / L
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kEstimate;
  ProblemSpec problem;
  std::vector<Scheme> schemes{Scheme::kMultinomial, Scheme::kStratified, Scheme::kSystematic};
  std::vector<std::size_t> budgets{16};
  std::vector<std::size_t> bernoulli_samples{4};
  std::vector<std::size_t> topk{16};
  std::size_t tile_size = 256;
  std::size_t tile_budget = 0;  // 0: round(S / T)
  std::size_t trials = 1;
  std::size_t replicates = 2000;
  std::size_t bootstrap_resamples = 10000;
  std::uint64_t seed = 0;
  std::string output = "out";
  Precision precision = Precision::kF64;
  std::size_t threads = 1;
  BandwidthScenario amdahl{15.0, 24.0, 1.5};
  RlSettings rl;
};

// Defaults for each experiment kind (seed 0).
ExperimentConfig default_config(ExperimentKind kind);

// Unknown keys and out-of-range values raise ConfigError. The seed must come
// from the document or from `seed_override`.
ExperimentConfig parse_config(const nlohmann::json& doc, std::optional<ExperimentKind> kind,
                              std::optional<std::uint64_t> seed_override);
nlohmann::json to_json(const ExperimentConfig& config);

// Gaussian: Q, K, V ~ N(0, 1). Other distributions encode a logit vector per
// KV head in the keys (query h is the basis vector e_{h mod d}); V ~ N(0, 1).
AttentionProblem generate_problem(const ProblemSpec& spec, const RngStream& stream);
void round_to_float(AttentionProblem& problem);

struct BootstrapCI {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t resamples = 0;
};

inline constexpr std::size_t kMinBootstrapResamples = 1000;

// Percentile bootstrap of the mean, 95% interval.
BootstrapCI bootstrap_ci(std::span<const double> samples, std::size_t resamples,
                         const RngStream& stream);

struct NamedTable {
  std::string name;  // file stem
  CsvTable table;
};

struct ExperimentResult {
  std::vector<NamedTable> tables;  // first is the primary table
  std::vector<std::pair<std::string, std::string>> extra_files;  // name, contents
  nlohmann::json metadata;

  const CsvTable& table(std::string_view name) const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);
void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir);

std::string config_hash(const ExperimentConfig& config);

}  // namespace santa
