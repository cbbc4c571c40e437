#include "santa/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "santa/estimators.hpp"
#include "santa/numeric.hpp"

namespace santa {

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SchedulePolicy SchedulePolicy::uniform(std::size_t layers, std::size_t total_budget,
                                       double learning_rate) {
  if (layers == 0) throw std::invalid_argument("schedule policy needs at least one layer");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  return {std::vector<double>(layers, 0.0), total_budget, learning_rate};
}

std::vector<double> SchedulePolicy::probabilities() const { return softmax_stable(logits); }

std::vector<std::int64_t> sample_schedule(const SchedulePolicy& policy, RngStream& stream) {
  const auto profile = WeightProfile::from_logits(policy.logits);
  std::vector<std::int64_t> out(policy.layers(), 0);
  for (std::size_t n = 0; n < policy.total_budget; ++n) out[profile.inverse_cdf(stream.uniform())] += 1;
  return out;
}

SchedulePolicy reinforce_update(const SchedulePolicy& policy, std::span<const Episode> batch,
                                std::span<const double> sampling_probabilities) {
  if (batch.empty()) throw std::invalid_argument("REINFORCE update: empty batch");
  const std::size_t layers = policy.layers();
  if (sampling_probabilities.size() != layers) {
    throw std::invalid_argument("REINFORCE update: probability length mismatch");
  }
  const double k = static_cast<double>(batch.size());
  double baseline = 0.0;
  for (const auto& e : batch) baseline += e.reward;
  baseline /= k;
  // Equal rewards must give an exactly zero advantage.
  if (std::all_of(batch.begin(), batch.end(), [&](const Episode& e) { return e.reward == batch[0].reward; })) {
    baseline = batch[0].reward;
  }
  const double n = static_cast<double>(policy.total_budget);
  std::vector<double> grad(layers, 0.0);
  for (const auto& e : batch) {
    if (e.schedule.size() != layers) throw std::invalid_argument("REINFORCE update: schedule length mismatch");
    const double advantage = e.reward - baseline;
    if (advantage == 0.0) continue;
    for (std::size_t i = 0; i < layers; ++i) {
      grad[i] += advantage * (static_cast<double>(e.schedule[i]) - n * sampling_probabilities[i]);
    }
  }
  SchedulePolicy out = policy;
  for (std::size_t i = 0; i < layers; ++i) out.logits[i] += policy.learning_rate * (grad[i] / k);
  return out;
}

SchedulePolicy reinforce_update(const SchedulePolicy& policy, std::span<const Episode> batch) {
  const auto probs = policy.probabilities();
  return reinforce_update(policy, batch, probs);
}

RewardOracle hidden_profile_oracle(std::vector<double> sensitivity, std::vector<double> kappa,
                                   double noise) {
  if (sensitivity.empty() || sensitivity.size() != kappa.size()) {
    throw std::invalid_argument("hidden profile: sensitivity and kappa lengths differ");
  }
  double total = 0.0;
  for (double w : sensitivity) {
    if (!(w >= 0.0)) throw std::invalid_argument("hidden profile: sensitivity must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("hidden profile: sensitivity sums to zero");
  for (double k : kappa) {
    if (!(k > 0.0)) throw std::invalid_argument("hidden profile: kappa must be positive");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("hidden profile: noise must be >= 0");
  RewardOracle oracle;
  oracle.description = fmt::format("hidden-profile(L={}, noise={})", sensitivity.size(), noise);
  oracle.evaluate = [w = std::move(sensitivity), kappa = std::move(kappa), total, noise](
                        std::span<const std::int64_t> schedule, RngStream& stream) {
    if (schedule.size() != w.size()) throw std::invalid_argument("hidden profile: schedule length mismatch");
    double r = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      r += w[i] * (1.0 - std::exp(-static_cast<double>(schedule[i]) / kappa[i]));
    }
    r /= total;
    if (noise > 0.0) r += noise * stream.normal();
    return std::clamp(r, 0.0, 1.0);
  };
  return oracle;
}

RewardOracle constant_oracle(double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) throw std::invalid_argument("constant oracle: reward outside [0, 1]");
  return {[reward](std::span<const std::int64_t>, RngStream&) { return reward; },
          fmt::format("constant({})", reward)};
}

TrainingRun run_async_training(const SchedulePolicy& initial, const RewardOracle& oracle,
                               const AsyncOptions& options, const RngStream& stream) {
  if (options.workers == 0) throw std::invalid_argument("async training: workers must be >= 1");
  if (options.episodes_per_batch == 0) throw std::invalid_argument("async training: E must be >= 1");
  if (!oracle.evaluate) throw std::invalid_argument("async training: oracle has no evaluate()");

  TrainingRun run{initial, {}};
  std::vector<SchedulePolicy> snapshots(options.workers, initial);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const std::size_t worker = it % options.workers;
    const SchedulePolicy& snapshot = snapshots[worker];
    const RngStream iter_stream = stream.child(Domain::kIteration, it);
    std::vector<Episode> batch(options.episodes_per_batch);
    parallel_for(batch.size(), options.threads, [&](std::size_t k) {
      const RngStream ep = iter_stream.child(Domain::kEpisode, k);
      RngStream draw = ep.child(Domain::kBudget, 0);
      RngStream reward = ep.child(Domain::kReward, 0);
      batch[k].schedule = sample_schedule(snapshot, draw);
      batch[k].reward = oracle.evaluate(batch[k].schedule, reward);
      if (!(batch[k].reward >= 0.0 && batch[k].reward <= 1.0)) {
        throw std::runtime_error("reward oracle returned a value outside [0, 1]");
      }
    });
    const auto sampling_probs = snapshot.probabilities();
    run.final_policy = reinforce_update(run.final_policy, batch, sampling_probs);
    double baseline = 0.0;
    for (const auto& e : batch) baseline += e.reward;
    baseline /= static_cast<double>(batch.size());
    run.trajectory.push_back({it, worker, baseline, run.final_policy.probabilities()});
    snapshots[worker] = run.final_policy;
  }
  return run;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::string trajectory_csv(const TrainingRun& run) {
  std::string out = "iteration,worker,baseline";
  const std::size_t layers = run.final_policy.layers();
  for (std::size_t i = 0; i < layers; ++i) out += fmt::format(",p_{}", i);
  out += '\n';
  for (const auto& point : run.trajectory) {
    out += fmt::format("{},{},{:.10g}", point.iteration, point.worker, point.baseline);
    for (double p : point.probabilities) out += fmt::format(",{:.10g}", p);
    out += '\n';
  }
  return out;
}

}  // namespace santa
