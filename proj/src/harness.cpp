#include "santa/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "santa/analysis.hpp"
#include "santa/numeric.hpp"
#include "santa/schedule.hpp"
#include "santa/score_sampler.hpp"
#include "santa/tiled.hpp"

namespace santa {

using nlohmann::json;

namespace {

constexpr std::array kKinds{
    ExperimentKind::kEstimate,       ExperimentKind::kVarianceSweep,
    ExperimentKind::kBernoulliErrorSweep, ExperimentKind::kUniqueRows,
    ExperimentKind::kUniqueKeys,     ExperimentKind::kCostReport,
    ExperimentKind::kAmdahl,         ExperimentKind::kPipelineFidelity,
    ExperimentKind::kRlTrain,
};

// Logit low enough that exp() underflows to exactly zero in double.
constexpr double kOffLogit = -800.0;

std::string num(double x) { return format_number(x); }
template <typename T>
std::string integer(T x) { return fmt::format("{}", x); }

// ---- config parsing -------------------------------------------------------

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
    }
  }
}

std::uint64_t get_u64(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(key, "must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::size_t get_count(const json& v, const std::string& key, std::size_t min = 1) {
  const auto x = get_u64(v, key);
  if (x < min) throw ConfigError(key, fmt::format("must be >= {}", min));
  return static_cast<std::size_t>(x);
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(key, "must be finite");
  return x;
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_grid(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) throw ConfigError(key, "must be a nonempty array");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_count(v[i], fmt::format("{}[{}]", key, i)));
  return out;
}

template <typename F>
auto parse_named(const json& v, const std::string& key, F parse) {
  const auto name = get_string(v, key);
  try {
    return parse(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

void require_increasing(const std::vector<std::size_t>& grid, const std::string& key) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ConfigError(key, "must be strictly increasing");
  }
}

// ---- helpers ----------------------------------------------------------------

std::vector<double> dense_outputs(const AttentionProblem& p, std::size_t h) {
  return dense_attention(p.query(h), p.keys_for(h), p.values_for(h), p.scale).value;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(std::span<const double> v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

RngStream experiment_stream(const ExperimentConfig& c) {
  return RngStream(c.seed).child(Domain::kExperiment, static_cast<std::uint64_t>(c.kind));
}

AttentionProblem trial_problem(const ExperimentConfig& c, const RngStream& root, std::size_t trial) {
  auto p = generate_problem(c.problem, root.child(Domain::kProblem, trial));
  if (c.precision == Precision::kF32) round_to_float(p);
  return p;
}

// ---- experiments ------------------------------------------------------------

ExperimentResult run_estimate(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  CsvTable t{{"trial", "head", "method", "budget", "relative_l2", "cosine", "unique_rows", "value_reads", "adds"}, {}};
  for (std::size_t trial = 0; trial < c.trials; ++trial) {
    const auto p = trial_problem(c, root, trial);
    for (std::size_t h = 0; h < p.geometry.n_heads(); ++h) {
      const auto dense = dense_attention(p.query(h), p.keys_for(h), p.values_for(h), p.scale);
      auto emit = [&](std::string method, std::size_t budget, const EstimatorOutput& o) {
        const auto f = fidelity(o.value, dense.value);
        t.add_row({integer(trial), integer(h), std::move(method), integer(budget), num(f.relative_l2),
                   num(f.cosine_similarity), integer(o.ledger.unique_value_rows_group),
                   integer(o.ledger.value_element_reads), integer(o.ledger.adds)});
      };
      emit("dense", p.n_keys(), dense);
      for (Scheme scheme : c.schemes) {
        for (std::size_t s : c.budgets) {
          RngStream st = root.child(Domain::kTrial, trial).child(Domain::kHead, h).child(Domain::kBudget, s);
          emit(std::string(to_string(scheme)), s,
               santa_estimate(p.query(h), p.keys_for(h), p.values_for(h), p.scale, s, scheme, st));
        }
      }
      for (std::size_t k : c.topk) {
        if (k > p.n_keys()) throw ConfigError("topk", fmt::format("k={} exceeds n_keys={}", k, p.n_keys()));
        emit("topk", k, topk_attention(p.query(h), p.keys_for(h), p.values_for(h), p.scale, k));
      }
    }
  }
  return {{{"estimate", std::move(t)}}, {}, {}};
}

ExperimentResult run_variance_sweep(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  CsvTable rows{{"scheme", "S", "var_trace", "method", "replicates", "trial"}, {}};
  CsvTable slopes{{"scheme", "slope", "trial"}, {}};
  for (std::size_t trial = 0; trial < c.trials; ++trial) {
    const auto p = trial_problem(c, root, trial);
    const auto profile = WeightProfile::from_logits(scores(p.query(0), p.keys_for(0), p.scale));
    const auto sweep = variance_sweep(profile, p.values_for(0), c.budgets, c.replicates,
                                      root.child(Domain::kTrial, trial));
    for (const auto& r : sweep.rows) {
      if (std::find(c.schemes.begin(), c.schemes.end(), r.scheme) == c.schemes.end()) continue;
      rows.add_row({std::string(to_string(r.scheme)), integer(r.budget), num(r.var_trace),
                    std::string(to_string(r.method)), integer(r.replicates), integer(trial)});
    }
    for (const auto& s : sweep.slopes) {
      if (std::find(c.schemes.begin(), c.schemes.end(), s.scheme) == c.schemes.end()) continue;
      slopes.add_row({std::string(to_string(s.scheme)), num(s.slope), integer(trial)});
    }
  }
  return {{{"variance_sweep", std::move(rows)}, {"slopes", std::move(slopes)}}, {}, {}};
}

struct BernoulliInstance {
  Matrix queries;  // group x d
  Matrix keys;     // n x d, N(0,1)/sqrt(d)
};

BernoulliInstance bernoulli_instance(const ProblemSpec& spec, const RngStream& stream, Precision precision) {
  const std::size_t d = spec.head_dim, n = spec.n_keys, g = spec.n_heads;
  BernoulliInstance inst{Matrix(g, d), Matrix(n, d)};
  RngStream qs = stream.child(Domain::kMatrix, 0);
  RngStream ks = stream.child(Domain::kMatrix, 1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& x : inst.queries.data()) x = qs.normal();
  for (double& x : inst.keys.data()) x = ks.normal() * inv_sqrt_d;
  if (precision == Precision::kF32) {
    for (double& x : inst.queries.data()) x = static_cast<float>(x);
    for (double& x : inst.keys.data()) x = static_cast<float>(x);
  }
  return inst;
}

double relative_error(std::span<const double> approx, std::span<const double> exact) {
  return fidelity(approx, exact).relative_l2;
}

ExperimentResult run_bernoulli_sweep(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  const std::size_t nb = c.bernoulli_samples.size();
  const std::size_t g = c.problem.n_heads;
  // [trial][B][variant] -> (error, per-head access, group access)
  struct Cell { double error, head, group; };
  std::vector<std::vector<std::array<Cell, 3>>> cells(c.trials, std::vector<std::array<Cell, 3>>(nb));
  parallel_for(c.trials, c.threads, [&](std::size_t trial) {
    const auto inst = bernoulli_instance(c.problem, root.child(Domain::kProblem, trial), c.precision);
    std::vector<std::vector<double>> exact(g);
    for (std::size_t q = 0; q < g; ++q) exact[q] = scores(inst.queries.row(q), inst.keys, 1.0);
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t samples = c.bernoulli_samples[b];
      const RngStream st = root.child(Domain::kTrial, trial).child(Domain::kBudget, samples);
      for (int v = 0; v < 2; ++v) {
        const auto mode = v == 0 ? BernoulliMode::kStandard : BernoulliMode::kStratified;
        const auto est = bernoulli_group_estimate(inst.queries, inst.keys, samples, mode, st.child(Domain::kStratum, v));
        double err = 0.0;
        for (std::size_t q = 0; q < g; ++q) err += relative_error(est.scores[q], exact[q]);
        cells[trial][b][v] = {err / static_cast<double>(g), est.report.per_head_fraction, est.report.group_fraction};
      }
      const auto mg = mean_group_query_estimate(inst.queries, inst.keys, samples, st.child(Domain::kStratum, 2));
      double err = 0.0;
      for (std::size_t q = 0; q < g; ++q) err += relative_error(mg.scores[q], exact[q]);
      cells[trial][b][2] = {err / static_cast<double>(g), mg.report.per_head_fraction, mg.report.group_fraction};
    }
  });

  const std::array<std::string, 3> names{"standard", "stratified", "mean-group"};
  CsvTable t{{"variant", "B", "mean_rel_error", "ci_lower", "ci_upper", "per_head_access", "group_access"}, {}};
  CsvTable slopes{{"variant", "slope"}, {}};
  for (std::size_t v = 0; v < 3; ++v) {
    std::vector<double> xs, ys;
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<double> err, head, group;
      for (std::size_t trial = 0; trial < c.trials; ++trial) {
        err.push_back(cells[trial][b][v].error);
        head.push_back(cells[trial][b][v].head);
        group.push_back(cells[trial][b][v].group);
      }
      const auto ci = bootstrap_ci(err, c.bootstrap_resamples,
                                   root.child(Domain::kBootstrap, b * 3 + v));
      t.add_row({names[v], integer(c.bernoulli_samples[b]), num(ci.mean), num(ci.lower), num(ci.upper),
                 num(mean(head)), num(mean(group))});
      xs.push_back(static_cast<double>(c.bernoulli_samples[b]));
      ys.push_back(ci.mean);
    }
    if (nb >= 2) slopes.add_row({names[v], num(loglog_slope(xs, ys))});
  }
  return {{{"bernoulli_error", std::move(t)}, {"slopes", std::move(slopes)}}, {}, {}};
}

ExperimentResult run_unique_rows(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  CsvTable t{{"scheme", "S", "coverage_pct", "ci_lower", "ci_upper", "n_k", "trials"}, {}};
  for (Scheme scheme : c.schemes) {
    const auto cov = unique_v_rows_prefill(c.problem.n_keys, c.problem.head_dim, c.problem.n_heads, c.budgets,
                                           scheme, c.trials, root.child(Domain::kBudget, static_cast<std::uint64_t>(scheme)),
                                           c.threads);
    for (std::size_t b = 0; b < cov.size(); ++b) {
      std::vector<double> pct;
      for (double x : cov[b].per_trial) pct.push_back(100.0 * x);
      const auto ci = bootstrap_ci(pct, c.bootstrap_resamples, root.child(Domain::kBootstrap, b));
      t.add_row({std::string(to_string(scheme)), integer(cov[b].budget), num(100.0 * cov[b].mean_fraction),
                 num(ci.lower), num(ci.upper), integer(c.problem.n_keys), integer(c.trials)});
    }
  }
  return {{{"unique_rows", std::move(t)}}, {}, {}};
}

ExperimentResult run_unique_keys(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  const auto p = trial_problem(c, root, 0);
  const auto profile = WeightProfile::from_logits(scores(p.query(0), p.keys_for(0), p.scale));
  CsvTable t{{"scheme", "S", "mean_unique", "ci_lower", "ci_upper", "occupancy_uniform"}, {}};
  for (Scheme scheme : c.schemes) {
    for (std::size_t s : c.budgets) {
      std::vector<double> counts(c.trials);
      parallel_for(c.trials, c.threads, [&](std::size_t trial) {
        RngStream st = root.child(Domain::kTrial, trial).child(Domain::kBudget, s)
                           .child(Domain::kStratum, static_cast<std::uint64_t>(scheme));
        counts[trial] = static_cast<double>(unique_keys(sample(profile, s, scheme, st)));
      });
      const auto ci = bootstrap_ci(counts, c.bootstrap_resamples, root.child(Domain::kBootstrap, s));
      t.add_row({std::string(to_string(scheme)), integer(s), num(ci.mean), num(ci.lower), num(ci.upper),
                 num(expected_unique_uniform(p.n_keys(), s))});
    }
  }
  return {{{"unique_keys", std::move(t)}}, {}, {}};
}

ExperimentResult run_cost_report(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  const std::uint64_t n = c.problem.n_keys, d = c.problem.head_dim;
  const std::uint64_t group = c.problem.n_heads / c.problem.n_kv_heads;
  CsvTable ledger;
  {
    const auto header = ledger_csv_header();
    std::size_t start = 0;
    while (true) {
      const auto comma = header.find(',', start);
      ledger.header.push_back(header.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  CsvTable checks{{"scheme", "S", "match", "detail"}, {}};
  CsvTable ratios{{"quantity", "S", "n_k", "G", "value", "percent"}, {}};
  const auto p = trial_problem(c, root, 0);
  auto add_ledger = [&](LedgerScheme scheme, std::uint64_t s, const CostLedger& l) {
    ledger.add_row(parse_csv(ledger_csv_header() + "\n" + ledger_csv_row(to_string(scheme), n, d, s, l)).rows.front());
  };
  for (std::size_t s : c.budgets) {
    const auto dense_sym = decode_ledger(LedgerScheme::kSdpa, n, d, s);
    const auto santa_sym = decode_ledger(LedgerScheme::kSanta, n, d, s);
    add_ledger(LedgerScheme::kSdpa, s, dense_sym);
    add_ledger(LedgerScheme::kSanta, s, santa_sym);
    std::vector<std::pair<LedgerScheme, std::pair<CostLedger, CostLedger>>> measured;
    measured.push_back({LedgerScheme::kSdpa,
                        {dense_attention(p.query(0), p.keys_for(0), p.values_for(0), p.scale).ledger, dense_sym}});
    RngStream st = root.child(Domain::kBudget, s);
    measured.push_back({LedgerScheme::kSanta,
                        {santa_estimate(p.query(0), p.keys_for(0), p.values_for(0), p.scale, s,
                                        Scheme::kMultinomial, st).ledger,
                         santa_sym}});
    if (s <= n) {
      const auto topk_sym = decode_ledger(LedgerScheme::kTopK, n, d, s);
      add_ledger(LedgerScheme::kTopK, s, topk_sym);
      measured.push_back({LedgerScheme::kTopK,
                          {topk_attention(p.query(0), p.keys_for(0), p.values_for(0), p.scale, s).ledger, topk_sym}});
    }
    for (const auto& [scheme, pair] : measured) {
      const auto check = measured_ledger_check(pair.first, pair.second);
      std::string detail = check.summary();
      std::replace(detail.begin(), detail.end(), ',', ' ');
      checks.add_row({std::string(to_string(scheme)), integer(s), check.pass ? "1" : "0", detail});
    }
    const double ratio = santa_value_stage_ratio(s, n);
    ratios.add_row({"santa_value_ratio", integer(s), integer(n), integer(group), num(ratio), num(100.0 * ratio)});
    const double worst = gqa_union_worst_case(s, group, n);
    ratios.add_row({"gqa_union_worst_case", integer(s), integer(n), integer(group), num(worst), num(100.0 * worst)});
  }
  return {{{"ledger", std::move(ledger)}, {"checks", std::move(checks)}, {"ratios", std::move(ratios)}}, {}, {}};
}

ExperimentResult run_amdahl(const ExperimentConfig& c) {
  CsvTable t{{"weight_bytes", "kv_bytes", "kv_speedup", "speedup", "speedup_4dp"}, {}};
  const double s = amdahl_decode_speedup(c.amdahl);
  t.add_row({num(c.amdahl.weight_bytes), num(c.amdahl.kv_bytes), num(c.amdahl.kv_speedup), num(s),
             fmt::format("{:.4f}", s)});
  return {{{"amdahl", std::move(t)}}, {}, {}};
}

ExperimentResult run_pipeline_fidelity(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  const std::size_t nb = c.budgets.size();
  // [trial][budget][pipeline] -> (rel l2, cosine), plus tile support per trial
  std::vector<std::vector<std::array<FidelityReport, 3>>> cells(c.trials, std::vector<std::array<FidelityReport, 3>>(nb));
  std::vector<double> support(c.trials, 0.0);
  parallel_for(c.trials, c.threads, [&](std::size_t trial) {
    const auto p = trial_problem(c, root, trial);
    const std::size_t heads = p.geometry.n_heads();
    std::vector<std::vector<double>> dense(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      dense[h] = dense_outputs(p, h);
      const auto profile = WeightProfile::from_logits(scores(p.query(h), p.keys_for(h), p.scale));
      support[trial] += static_cast<double>(tile_support_statistic(profile, c.tile_size, 0.9)) / static_cast<double>(heads);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t s = c.budgets[b];
      const RngStream st = root.child(Domain::kTrial, trial).child(Domain::kBudget, s);
      const auto prop = prop_decode(p, c.tile_size, s, st.child(Domain::kStratum, 0));
      PipelineOutput flash;
      if (c.tile_budget == 0) {
        flash = flash_decode(p, c.tile_size, s, st.child(Domain::kStratum, 1));
      } else {
        std::vector<TilePartial> partials;
        for (std::size_t t = 0; t < tile_count(p.n_keys(), c.tile_size); ++t) {
          partials.push_back(flash_tile_partial(p, t, c.tile_size, c.tile_budget, st.child(Domain::kStratum, 1)));
        }
        flash = flash_merge(partials, c.tile_budget);
      }
      std::array<FidelityReport, 3> acc{};
      for (std::size_t h = 0; h < heads; ++h) {
        RngStream gs = st.child(Domain::kStratum, 2).child(Domain::kHead, h);
        const auto global = santa_estimate(p.query(h), p.keys_for(h), p.values_for(h), p.scale, s,
                                           Scheme::kSystematic, gs);
        const std::array<const std::vector<double>*, 3> outs{&prop.heads[h].value, &flash.heads[h].value, &global.value};
        for (std::size_t k = 0; k < 3; ++k) {
          const auto f = fidelity(*outs[k], dense[h]);
          acc[k].relative_l2 += f.relative_l2 / static_cast<double>(heads);
          acc[k].cosine_similarity += f.cosine_similarity / static_cast<double>(heads);
        }
      }
      cells[trial][b] = acc;
    }
  });
  const std::array<std::string, 3> names{"prop", "flash", "global-systematic"};
  CsvTable t{{"pipeline", "S", "median_rel_l2", "mean_rel_l2", "mean_cosine", "mean_tile_support", "trials"}, {}};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<double> rel, cos;
      for (std::size_t trial = 0; trial < c.trials; ++trial) {
        rel.push_back(cells[trial][b][k].relative_l2);
        cos.push_back(cells[trial][b][k].cosine_similarity);
      }
      t.add_row({names[k], integer(c.budgets[b]), num(median(rel)), num(mean(rel)), num(mean(cos)),
                 num(mean(support)), integer(c.trials)});
    }
  }
  return {{{"pipeline_fidelity", std::move(t)}}, {}, {}};
}

ExperimentResult run_rl_train(const ExperimentConfig& c) {
  const RngStream root = experiment_stream(c);
  const auto& rl = c.rl;
  RngStream ws = root.child(Domain::kProblem, 0);
  std::vector<double> w(rl.layers);
  for (double& x : w) x = 0.1 + 0.9 * ws.uniform();
  const double kappa = rl.kappa > 0.0 ? rl.kappa
                                      : static_cast<double>(rl.total_budget) / static_cast<double>(rl.layers);
  const auto oracle = hidden_profile_oracle(w, std::vector<double>(rl.layers, kappa), rl.noise);
  const auto policy = SchedulePolicy::uniform(rl.layers, rl.total_budget, rl.learning_rate);
  const auto run = run_async_training(policy, oracle,
                                      {rl.workers, rl.episodes_per_batch, rl.iterations, c.threads},
                                      root.child(Domain::kWorker, 0));
  const auto probs = run.final_policy.probabilities();
  const double rho = spearman(probs, w);
  CsvTable layers{{"layer", "hidden_weight", "final_probability", "final_logit"}, {}};
  for (std::size_t i = 0; i < rl.layers; ++i) {
    layers.add_row({integer(i), num(w[i]), num(probs[i]), num(run.final_policy.logits[i])});
  }
  CsvTable summary{{"metric", "value"}, {}};
  summary.add_row({"spearman", num(rho)});
  summary.add_row({"final_baseline", num(run.trajectory.empty() ? 0.0 : run.trajectory.back().baseline)});
  summary.add_row({"iterations", integer(rl.iterations)});

  json schedule;
  schedule["probabilities"] = probs;
  schedule["allocation"] = allocate_largest_remainder(probs, static_cast<std::int64_t>(rl.total_budget));
  schedule["total_budget"] = rl.total_budget;
  schedule["layers"] = rl.layers;
  ExperimentResult out{{{"summary", std::move(summary)}, {"layers", std::move(layers)}},
                       {{"trajectory.csv", trajectory_csv(run)}, {"final_schedule.json", schedule.dump(2) + "\n"}},
                       {}};
  out.metadata["spearman"] = rho;
  return out;
}

}  // namespace

// ---- names ------------------------------------------------------------------

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kEstimate: return "estimate";
    case ExperimentKind::kVarianceSweep: return "variance-sweep";
    case ExperimentKind::kBernoulliErrorSweep: return "bernoulli-error-sweep";
    case ExperimentKind::kUniqueRows: return "unique-rows";
    case ExperimentKind::kUniqueKeys: return "unique-keys";
    case ExperimentKind::kCostReport: return "cost-report";
    case ExperimentKind::kAmdahl: return "amdahl";
    case ExperimentKind::kPipelineFidelity: return "pipeline-fidelity";
    case ExperimentKind::kRlTrain: return "rl-train";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : kKinds) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown experiment '{}'", name));
}

std::span<const ExperimentKind> all_experiment_kinds() { return kKinds; }

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::kGaussian: return "gaussian";
    case Distribution::kZipfLogits: return "zipf-logits";
    case Distribution::kOneHot: return "one-hot";
    case Distribution::kTemperatureScaled: return "temperature-scaled";
    case Distribution::kUniform: return "uniform";
  }
  return "unknown";
}

Distribution parse_distribution(std::string_view name) {
  for (auto d : {Distribution::kGaussian, Distribution::kZipfLogits, Distribution::kOneHot,
                 Distribution::kTemperatureScaled, Distribution::kUniform}) {
    if (to_string(d) == name) return d;
  }
  throw std::invalid_argument(fmt::format("unknown distribution '{}'", name));
}

std::string_view to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view name) {
  if (name == "f64") return Precision::kF64;
  if (name == "f32") return Precision::kF32;
  throw std::invalid_argument(fmt::format("unknown precision '{}' (expected f64 or f32)", name));
}

// ---- config -----------------------------------------------------------------

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::kEstimate:
      break;
    case ExperimentKind::kVarianceSweep:
      c.problem = {256, 8, 1, 1, Distribution::kZipfLogits, 1.0, 0.5};
      c.budgets = {32, 64, 128, 256};
      break;
    case ExperimentKind::kBernoulliErrorSweep:
      c.problem = {1024, 128, 4, 1, Distribution::kGaussian, 1.0, 0.5};
      c.bernoulli_samples = {2, 4, 8, 16};
      c.trials = 100;
      break;
    case ExperimentKind::kUniqueRows:
      c.problem = {1024, 128, 32, 32, Distribution::kGaussian, 1.0, 0.5};
      c.schemes = {Scheme::kMultinomial};
      c.budgets = {1, 4, 8, 16};
      c.trials = 10;
      break;
    case ExperimentKind::kUniqueKeys:
      c.problem = {8192, 8, 1, 1, Distribution::kUniform, 1.0, 0.5};
      c.budgets = {256};
      c.trials = 1000;
      break;
    case ExperimentKind::kCostReport:
      c.problem = {8192, 128, 4, 1, Distribution::kGaussian, 1.0, 0.5};
      c.budgets = {256};
      break;
    case ExperimentKind::kAmdahl:
      break;
    case ExperimentKind::kPipelineFidelity:
      c.problem = {1024, 16, 1, 1, Distribution::kGaussian, 1.0, 0.5};
      c.budgets = {4096};
      c.trials = 100;
      break;
    case ExperimentKind::kRlTrain:
      break;
  }
  return c;
}

ExperimentConfig parse_config(const json& doc, std::optional<ExperimentKind> kind,
                              std::optional<std::uint64_t> seed_override) {
  reject_unknown(doc, "",
                 {"experiment", "seed", "output", "precision", "threads", "problem", "schemes", "budgets",
                  "bernoulli_samples", "topk", "tile_size", "tile_budget", "trials", "replicates",
                  "bootstrap_resamples", "amdahl", "rl"});
  ExperimentKind k{};
  if (doc.contains("experiment")) {
    k = parse_named(doc["experiment"], "experiment", parse_experiment_kind);
    if (kind && *kind != k) {
      throw ConfigError("experiment", fmt::format("config is for '{}', not '{}'", to_string(k), to_string(*kind)));
    }
  } else if (kind) {
    k = *kind;
  } else {
    throw ConfigError("experiment", "required");
  }
  ExperimentConfig c = default_config(k);

  if (seed_override) {
    c.seed = *seed_override;
  } else if (doc.contains("seed")) {
    c.seed = get_u64(doc["seed"], "seed");
  } else {
    throw ConfigError("seed", "required (no seed is taken from the environment)");
  }
  if (doc.contains("output")) c.output = get_string(doc["output"], "output");
  if (doc.contains("precision")) c.precision = parse_named(doc["precision"], "precision", parse_precision);
  if (doc.contains("threads")) c.threads = get_count(doc["threads"], "threads");

  if (doc.contains("problem")) {
    const auto& p = doc["problem"];
    reject_unknown(p, "problem", {"n_keys", "head_dim", "n_heads", "n_kv_heads", "distribution", "zipf_exponent", "temperature"});
    if (p.contains("n_keys")) c.problem.n_keys = get_count(p["n_keys"], "problem.n_keys");
    if (p.contains("head_dim")) c.problem.head_dim = get_count(p["head_dim"], "problem.head_dim");
    if (p.contains("n_heads")) c.problem.n_heads = get_count(p["n_heads"], "problem.n_heads");
    if (p.contains("n_kv_heads")) c.problem.n_kv_heads = get_count(p["n_kv_heads"], "problem.n_kv_heads");
    if (p.contains("distribution")) {
      c.problem.distribution = parse_named(p["distribution"], "problem.distribution", parse_distribution);
    }
    if (p.contains("zipf_exponent")) {
      c.problem.zipf_exponent = get_real(p["zipf_exponent"], "problem.zipf_exponent");
      if (!(c.problem.zipf_exponent > 0.0)) throw ConfigError("problem.zipf_exponent", "must be > 0");
    }
    if (p.contains("temperature")) {
      c.problem.temperature = get_real(p["temperature"], "problem.temperature");
      if (!(c.problem.temperature > 0.0)) throw ConfigError("problem.temperature", "must be > 0");
    }
  }
  if (c.problem.n_heads % c.problem.n_kv_heads != 0) {
    throw ConfigError("problem.n_kv_heads", "must divide problem.n_heads");
  }
  if (doc.contains("schemes")) {
    const auto& s = doc["schemes"];
    if (!s.is_array() || s.empty()) throw ConfigError("schemes", "must be a nonempty array");
    c.schemes.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      c.schemes.push_back(parse_named(s[i], fmt::format("schemes[{}]", i), parse_scheme));
    }
  }
  if (doc.contains("budgets")) c.budgets = get_grid(doc["budgets"], "budgets");
  if (doc.contains("bernoulli_samples")) c.bernoulli_samples = get_grid(doc["bernoulli_samples"], "bernoulli_samples");
  if (doc.contains("topk")) c.topk = get_grid(doc["topk"], "topk");
  if (doc.contains("tile_size")) c.tile_size = get_count(doc["tile_size"], "tile_size");
  if (doc.contains("tile_budget")) c.tile_budget = get_count(doc["tile_budget"], "tile_budget", 0);
  if (doc.contains("trials")) c.trials = get_count(doc["trials"], "trials");
  if (doc.contains("replicates")) c.replicates = get_count(doc["replicates"], "replicates", 2);
  if (doc.contains("bootstrap_resamples")) {
    c.bootstrap_resamples = get_count(doc["bootstrap_resamples"], "bootstrap_resamples", kMinBootstrapResamples);
  }
  if (k == ExperimentKind::kVarianceSweep) require_increasing(c.budgets, "budgets");
  if (k == ExperimentKind::kBernoulliErrorSweep) require_increasing(c.bernoulli_samples, "bernoulli_samples");

  if (doc.contains("amdahl")) {
    const auto& a = doc["amdahl"];
    reject_unknown(a, "amdahl", {"weight_bytes", "kv_bytes", "kv_speedup"});
    if (a.contains("weight_bytes")) c.amdahl.weight_bytes = get_real(a["weight_bytes"], "amdahl.weight_bytes");
    if (a.contains("kv_bytes")) c.amdahl.kv_bytes = get_real(a["kv_bytes"], "amdahl.kv_bytes");
    if (a.contains("kv_speedup")) c.amdahl.kv_speedup = get_real(a["kv_speedup"], "amdahl.kv_speedup");
    if (!(c.amdahl.weight_bytes > 0.0)) throw ConfigError("amdahl.weight_bytes", "must be > 0");
    if (!(c.amdahl.kv_bytes > 0.0)) throw ConfigError("amdahl.kv_bytes", "must be > 0");
    if (!(c.amdahl.kv_speedup >= 1.0)) throw ConfigError("amdahl.kv_speedup", "must be >= 1");
  }
  if (doc.contains("rl")) {
    const auto& r = doc["rl"];
    reject_unknown(r, "rl", {"layers", "total_budget", "learning_rate", "episodes_per_batch", "workers",
                             "iterations", "noise", "kappa"});
    if (r.contains("layers")) c.rl.layers = get_count(r["layers"], "rl.layers");
    if (r.contains("total_budget")) c.rl.total_budget = get_count(r["total_budget"], "rl.total_budget");
    if (r.contains("learning_rate")) {
      c.rl.learning_rate = get_real(r["learning_rate"], "rl.learning_rate");
      if (!(c.rl.learning_rate > 0.0)) throw ConfigError("rl.learning_rate", "must be > 0");
    }
    if (r.contains("episodes_per_batch")) c.rl.episodes_per_batch = get_count(r["episodes_per_batch"], "rl.episodes_per_batch");
    if (r.contains("workers")) c.rl.workers = get_count(r["workers"], "rl.workers");
    if (r.contains("iterations")) c.rl.iterations = get_count(r["iterations"], "rl.iterations");
    if (r.contains("noise")) {
      c.rl.noise = get_real(r["noise"], "rl.noise");
      if (!(c.rl.noise >= 0.0)) throw ConfigError("rl.noise", "must be >= 0");
    }
    if (r.contains("kappa")) {
      c.rl.kappa = get_real(r["kappa"], "rl.kappa");
      if (!(c.rl.kappa >= 0.0)) throw ConfigError("rl.kappa", "must be >= 0 (0 means N / L)");
    }
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = std::string(to_string(c.kind));
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["precision"] = std::string(to_string(c.precision));
  j["threads"] = c.threads;
  j["problem"] = {{"n_keys", c.problem.n_keys},
                  {"head_dim", c.problem.head_dim},
                  {"n_heads", c.problem.n_heads},
                  {"n_kv_heads", c.problem.n_kv_heads},
                  {"distribution", std::string(to_string(c.problem.distribution))},
                  {"zipf_exponent", c.problem.zipf_exponent},
                  {"temperature", c.problem.temperature}};
  std::vector<std::string> schemes;
  for (auto s : c.schemes) schemes.emplace_back(to_string(s));
  j["schemes"] = schemes;
  j["budgets"] = c.budgets;
  j["bernoulli_samples"] = c.bernoulli_samples;
  j["topk"] = c.topk;
  j["tile_size"] = c.tile_size;
  j["tile_budget"] = c.tile_budget;
  j["trials"] = c.trials;
  j["replicates"] = c.replicates;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["amdahl"] = {{"weight_bytes", c.amdahl.weight_bytes},
                 {"kv_bytes", c.amdahl.kv_bytes},
                 {"kv_speedup", c.amdahl.kv_speedup}};
  j["rl"] = {{"layers", c.rl.layers},
             {"total_budget", c.rl.total_budget},
             {"learning_rate", c.rl.learning_rate},
             {"episodes_per_batch", c.rl.episodes_per_batch},
             {"workers", c.rl.workers},
             {"iterations", c.rl.iterations},
             {"noise", c.rl.noise},
             {"kappa", c.rl.kappa}};
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  // FNV-1a over the canonical dump; threads and output do not affect results.
  json j = to_json(config);
  j.erase("threads");
  j.erase("output");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ---- problems and statistics ------------------------------------------------

AttentionProblem generate_problem(const ProblemSpec& spec, const RngStream& stream) {
  HeadGeometry geo(spec.n_heads, spec.n_kv_heads, spec.head_dim);
  if (spec.n_keys == 0) throw std::invalid_argument("problem needs n_keys >= 1");
  const std::size_t n = spec.n_keys, d = spec.head_dim;
  AttentionProblem p{geo, Matrix(spec.n_heads, d), {}, {}, default_scale(d)};
  for (std::size_t k = 0; k < spec.n_kv_heads; ++k) {
    Matrix values(n, d);
    RngStream vs = stream.child(Domain::kMatrix, 2 + 2 * k);
    for (double& x : values.data()) x = vs.normal();
    p.values.push_back(std::move(values));
  }
  if (spec.distribution == Distribution::kGaussian) {
    RngStream qs = stream.child(Domain::kMatrix, 0);
    for (double& x : p.queries.data()) x = qs.normal();
    for (std::size_t k = 0; k < spec.n_kv_heads; ++k) {
      Matrix keys(n, d);
      RngStream ks = stream.child(Domain::kMatrix, 1 + 2 * k);
      for (double& x : keys.data()) x = ks.normal();
      p.keys.push_back(std::move(keys));
    }
    return p;
  }
  for (std::size_t h = 0; h < spec.n_heads; ++h) p.queries(h, h % d) = 1.0;
  for (std::size_t k = 0; k < spec.n_kv_heads; ++k) {
    RngStream ls = stream.child(Domain::kMatrix, 1 + 2 * k);
    std::vector<double> logits(n, 0.0);
    switch (spec.distribution) {
      case Distribution::kZipfLogits:
        for (std::size_t j = 0; j < n; ++j) logits[j] = -spec.zipf_exponent * std::log(static_cast<double>(j + 1));
        break;
      case Distribution::kOneHot: {
        const auto hot = ls.below(n);
        for (std::size_t j = 0; j < n; ++j) logits[j] = j == hot ? 0.0 : kOffLogit;
        break;
      }
      case Distribution::kTemperatureScaled:
        for (double& x : logits) x = ls.normal() / spec.temperature;
        break;
      case Distribution::kUniform:
      case Distribution::kGaussian:
        break;
    }
    Matrix keys(n, d);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c) keys(j, c) = logits[j] / p.scale;
    }
    p.keys.push_back(std::move(keys));
  }
  return p;
}

void round_to_float(AttentionProblem& problem) {
  auto round = [](Matrix& m) {
    for (double& x : m.data()) x = static_cast<double>(static_cast<float>(x));
  };
  round(problem.queries);
  for (auto& k : problem.keys) round(k);
  for (auto& v : problem.values) round(v);
}

BootstrapCI bootstrap_ci(std::span<const double> samples, std::size_t resamples, const RngStream& stream) {
  if (samples.empty()) throw std::invalid_argument("bootstrap: empty input");
  if (resamples < kMinBootstrapResamples) {
    throw std::invalid_argument(fmt::format("bootstrap: need at least {} resamples", kMinBootstrapResamples));
  }
  const std::size_t n = samples.size();
  BootstrapCI out;
  out.resamples = resamples;
  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  if (std::all_of(samples.begin(), samples.end(), [&](double x) { return x == samples[0]; })) {
    out.mean = out.lower = out.upper = samples[0];
    return out;
  }
  RngStream s = stream.child(Domain::kBootstrap, 0);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += samples[s.below(n)];
    m = acc / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, resamples - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  out.lower = std::min(quantile(0.025), out.mean);
  out.upper = std::max(quantile(0.975), out.mean);
  return out;
}

// ---- runner -----------------------------------------------------------------

const CsvTable& ExperimentResult::table(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t.table;
  }
  throw std::invalid_argument(fmt::format("no result table '{}'", name));
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult out;
  switch (c.kind) {
    case ExperimentKind::kEstimate: out = run_estimate(c); break;
    case ExperimentKind::kVarianceSweep: out = run_variance_sweep(c); break;
    case ExperimentKind::kBernoulliErrorSweep: out = run_bernoulli_sweep(c); break;
    case ExperimentKind::kUniqueRows: out = run_unique_rows(c); break;
    case ExperimentKind::kUniqueKeys: out = run_unique_keys(c); break;
    case ExperimentKind::kCostReport: out = run_cost_report(c); break;
    case ExperimentKind::kAmdahl: out = run_amdahl(c); break;
    case ExperimentKind::kPipelineFidelity: out = run_pipeline_fidelity(c); break;
    case ExperimentKind::kRlTrain: out = run_rl_train(c); break;
  }
  json meta = out.metadata.is_null() ? json::object() : out.metadata;
  meta["experiment"] = std::string(to_string(c.kind));
  meta["seed"] = c.seed;
  meta["precision"] = std::string(to_string(c.precision));
  meta["library_version"] = SANTA_VERSION;
  meta["config_hash"] = config_hash(c);
  meta["config"] = to_json(c);
  // The output location is not part of the experiment.
  meta["config"].erase("output");
  meta["tunables"] = {{"tile_size", c.tile_size},
                      {"tile_budget", c.tile_budget == 0 ? json("round(S/T)") : json(c.tile_budget)},
                      {"replicates", c.replicates},
                      {"bootstrap_resamples", c.bootstrap_resamples},
                      {"bootstrap_method", "percentile"},
                      {"largest_remainder_ties", "lower tile index"},
                      {"topk_ties", "lower key index"},
                      {"tiny_tile_mass", kTinyTileMass},
                      {"group_mean_floor", kGroupMeanFloor}};
  std::vector<std::string> files;
  for (const auto& t : out.tables) files.push_back(t.name + ".csv");
  for (const auto& [name, _] : out.extra_files) files.push_back(name);
  meta["files"] = files;
  out.metadata = std::move(meta);
  return out;
}

void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : result.tables) write_text(dir / (t.name + ".csv"), t.table.to_string());
  for (const auto& [name, text] : result.extra_files) write_text(dir / name, text);
  write_text(dir / "metadata.json", result.metadata.dump(2) + "\n");
}

}  // namespace santa
