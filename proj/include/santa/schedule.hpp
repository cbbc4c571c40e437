#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "santa/rng.hpp"

namespace santa {

inline constexpr std::size_t kDefaultLayers = 28;
inline constexpr std::size_t kDefaultScheduleBudget = 224;
inline constexpr double kDefaultLearningRate = 0.02;
inline constexpr std::size_t kDefaultEpisodesPerBatch = 10;

struct SchedulePolicy {
  std::vector<double> logits;  // one per layer
  std::size_t total_budget = kDefaultScheduleBudget;
  double learning_rate = kDefaultLearningRate;

  static SchedulePolicy uniform(std::size_t layers = kDefaultLayers,
                                std::size_t total_budget = kDefaultScheduleBudget,
                                double learning_rate = kDefaultLearningRate);
  std::size_t layers() const { return logits.size(); }
  std::vector<double> probabilities() const;
};

// Multinomial(N, softmax(logits)).
std::vector<std::int64_t> sample_schedule(const SchedulePolicy& policy, RngStream& stream);

struct Episode {
  std::vector<std::int64_t> schedule;
  double reward = 0.0;
};

// theta += alpha * (1/K) sum_k (r_k - b)(s_k - N p), b = mean reward.
SchedulePolicy reinforce_update(const SchedulePolicy& policy, std::span<const Episode> batch);
// Same, with p taken from the policy the batch was sampled under.
SchedulePolicy reinforce_update(const SchedulePolicy& policy, std::span<const Episode> batch,
                                std::span<const double> sampling_probabilities);

struct RewardOracle {
  // Must return a value in [0, 1]; the stream is keyed by the episode.
  std::function<double(std::span<const std::int64_t>, RngStream&)> evaluate;
  std::string description;
};

// r = clamp(sum_i w_i (1 - exp(-s_i / kappa_i)) / sum_i w_i + noise * xi, 0, 1)
RewardOracle hidden_profile_oracle(std::vector<double> sensitivity, std::vector<double> kappa,
                                   double noise);
RewardOracle constant_oracle(double reward);

struct TrajectoryPoint {
  std::size_t iteration = 0;
  std::size_t worker = 0;
  double baseline = 0.0;
  std::vector<double> probabilities;  // after the update
};

struct TrainingRun {
  SchedulePolicy final_policy;
  std::vector<TrajectoryPoint> trajectory;
};

struct AsyncOptions {
  std::size_t workers = 1;
  std::size_t episodes_per_batch = kDefaultEpisodesPerBatch;
  std::size_t iterations = 500;
  std::size_t threads = 1;
};

// Round-robin arrivals: update i comes from worker i mod W, whose batch was
// sampled from the policy it last saw (W - 1 updates stale once warm).
// Episode k of update i draws on stream.child(kIteration, i).child(kEpisode, k).
TrainingRun run_async_training(const SchedulePolicy& initial, const RewardOracle& oracle,
                               const AsyncOptions& options, const RngStream& stream);

// Rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

std::string trajectory_csv(const TrainingRun& run);

}  // namespace santa
