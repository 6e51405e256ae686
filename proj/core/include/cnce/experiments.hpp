#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnce/config.hpp"
#include "cnce/estimators.hpp"
#include "cnce/instdisc.hpp"

namespace cnce {

/// Runs fn(0) .. fn(count - 1) on up to `threads` workers. Each index must
/// write only its own result slot, so the outcome is independent of the
/// thread count. The first exception thrown by any index is rethrown.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Seeds run.seed, run.seed + 1, ... (run.seeds of them).
std::vector<std::uint64_t> seed_list(const ExperimentConfig& config);

/// 17 significant digits, the CSV float format.
std::string format_real(double v);

// Builders from the flat config.
GaussianPairSpec toy_spec(const ExperimentConfig& config);
CriticTrainConfig critic_config(const ExperimentConfig& config);
RunConfig run_config(const ExperimentConfig& config);
AugmentationSpec augmentation_config(const ExperimentConfig& config);
Schedule schedule_config(const ExperimentConfig& config);

/// Per-seed toy setup: a critic trained on one sample and the similarity
/// matrix of an independent evaluation sample.
struct ToyTrial {
  PairCritic critic;
  Matrix eval_sims;
  Rng estimate_rng{0};
};
ToyTrial toy_trial(const ExperimentConfig& config, std::uint64_t seed);

struct ToyMiResult {
  double true_mi = 0.0;
  EstimateRecord nce;
  std::vector<EstimateRecord> cnce;  // one per toy.omegas entry
};
ToyMiResult run_toy_mi(const ExperimentConfig& config, std::size_t threads = 1);
std::string toy_mi_csv(const ToyMiResult& result);

BiasVarianceReport run_bias_var(const ExperimentConfig& config, const RingSpec& spec);
std::string bias_var_csv(const BiasVarianceReport& report);

struct CounterexampleResult {
  double true_mi = 0.0;
  std::vector<double> fractions;
  std::vector<EstimateRecord> estimates;  // one per fraction
};
CounterexampleResult run_counterexample(const ExperimentConfig& config, std::size_t threads = 1);
std::string counterexample_csv(const CounterexampleResult& result);

/// A named training variant: `<method>[-<mode>][-noanneal]` where method is
/// ir, moco or la and mode is ring, ball, cave, ringc (ring plus close
/// neighbors) or full (ring over the whole support). Ring and ball follow
/// the schedule.* keys; `-noanneal` pins the lower threshold at
/// schedule.end from the first epoch.
struct Variant {
  std::string name;
  Method method = Method::ir;
  RingMode ring = RingMode::off;
  bool anneal = true;
  bool full_support = false;
};
Variant parse_variant(const std::string& name);
RunConfig variant_config(const RunConfig& base, const Variant& variant);

/// Data and split for one seed of the synthetic benchmark.
struct InstdiscSetup {
  SyntheticDataset data;
  Split split;
};
InstdiscSetup instdisc_setup(const ExperimentConfig& config, std::uint64_t seed);

struct InstdiscResult {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> accuracy;              // [variant][seed]
  std::vector<std::vector<std::vector<EpochLog>>> logs;   // [variant][seed]
  nlohmann::json summary() const;
};
InstdiscResult run_instdisc(const ExperimentConfig& config, std::size_t threads = 1);

struct PhaseResult {
  std::vector<std::size_t> branch_epochs;
  std::vector<double> omegas;
  std::vector<PhaseGrid> per_seed;
  /// accuracy averaged over seeds, [branch][omega].
  std::vector<std::vector<double>> mean() const;
};
PhaseResult run_phase_study(const ExperimentConfig& config, std::size_t threads = 1);
std::string phase_csv(const PhaseResult& result);

/// Named output files of one command.
using OutputFiles = std::vector<std::pair<std::string, std::string>>;

/// Runs a CLI command by name (toy-mi, bias-var, counterexample, instdisc,
/// phase-study) and renders its outputs, including the resolved config.
OutputFiles run_command(const std::string& command, const ExperimentConfig& config, std::size_t threads = 1);

}  // namespace cnce
