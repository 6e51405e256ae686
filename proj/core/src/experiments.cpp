#include "cnce/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cnce {

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::size_t error_index = count;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        // Report the lowest failing index so errors are schedule independent.
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::uint64_t> seed_list(const ExperimentConfig& config) {
  const auto base = config.u64("run.seed");
  const auto n = config.count("run.seeds");
  if (n == 0) throw ConfigError("run.seeds", "config key 'run.seeds': need at least one seed");
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = base + i;
  return seeds;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// Re-raises library validation failures as configuration errors on `key`.
template <class F>
auto keyed(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, "config key '" + key + "': " + e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(key, "config key '" + key + "': " + e.what());
  }
}

Matrix square2(const ExperimentConfig& c, const std::string& key) {
  const auto v = c.reals(key);
  if (v.size() != 4) throw ConfigError(key, "config key '" + key + "': expected 4 comma-separated entries");
  return Matrix::from_rows({{v[0], v[1]}, {v[2], v[3]}});
}

}  // namespace

GaussianPairSpec toy_spec(const ExperimentConfig& config) {
  GaussianPairSpec spec{square2(config, "toy.sigma_z"), square2(config, "toy.sigma_eps")};
  keyed("toy.sigma_z", [&] { spec.validate(); });
  return spec;
}

CriticTrainConfig critic_config(const ExperimentConfig& config) {
  CriticTrainConfig c;
  c.hidden = config.count("toy.hidden");
  c.linear_layers = config.count("toy.layers");
  c.out_dim = config.count("toy.out_dim");
  c.tau = config.real("toy.tau");
  c.epochs = config.count("toy.epochs");
  c.batch = config.count("toy.batch");
  c.negatives = config.count("toy.train_k");
  c.optimizer.learning_rate = config.real("opt.toy_lr");
  if (c.linear_layers < 1) throw ConfigError("toy.layers", "config key 'toy.layers': need at least one layer");
  if (!(c.tau > 0.0)) throw ConfigError("toy.tau", "config key 'toy.tau': must be positive");
  if (c.batch == 0) throw ConfigError("toy.batch", "config key 'toy.batch': must be positive");
  return c;
}

AugmentationSpec augmentation_config(const ExperimentConfig& config) {
  AugmentationSpec a;
  a.noise_sigma = config.real("aug.noise");
  a.jitter_lo = config.real("aug.jitter_lo");
  a.jitter_hi = config.real("aug.jitter_hi");
  a.dropout = config.real("aug.dropout");
  keyed("aug.noise", [&] { a.validate(); });
  return a;
}

Schedule schedule_config(const ExperimentConfig& config) {
  Schedule s;
  s.kind = keyed("schedule.kind", [&] { return parse_schedule_kind(config.text("schedule.kind")); });
  s.start_omega = config.real("schedule.start");
  s.end_omega = config.real("schedule.end");
  s.horizon_epochs = config.count("schedule.horizon");
  s.delta = config.real("schedule.delta");
  s.omega_min = config.real("schedule.min");
  s.omega_max = config.real("schedule.max");
  for (const auto& item : config.texts("schedule.steps")) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("schedule.steps", "config key 'schedule.steps': expected epoch:omega pairs");
    std::size_t epoch = 0;
    double omega = 0.0;
    try {
      std::size_t used = 0;
      epoch = std::stoul(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("epoch");
      const std::string w = item.substr(colon + 1);
      omega = std::stod(w, &used);
      if (used != w.size()) throw std::invalid_argument("omega");
    } catch (const std::exception&) {
      throw ConfigError("schedule.steps", "config key 'schedule.steps': bad entry '" + item + "'");
    }
    s.breakpoints.emplace_back(epoch, omega);
  }
  return s;
}

RunConfig run_config(const ExperimentConfig& config) {
  RunConfig r;
  r.method = keyed("train.method", [&] { return parse_method(config.text("train.method")); });
  r.ring = RingMode::off;
  r.spec = RingSpec{0.0, config.real("ring.omega_upper")};
  keyed("ring.omega_upper", [&] { r.spec.validate(); });
  r.schedule = schedule_config(config);
  r.hidden = config.counts("model.hidden");
  r.out_dim = config.count("model.out_dim");
  r.k = config.count("train.k");
  r.tau = config.real("train.tau");
  const auto kind = config.text("opt.kind");
  if (kind == "sgd") r.optimizer.kind = OptimizerKind::sgd;
  else if (kind == "adam") r.optimizer.kind = OptimizerKind::adam;
  else throw ConfigError("opt.kind", "config key 'opt.kind': expected sgd or adam, got '" + kind + "'");
  r.optimizer.learning_rate = config.real("opt.lr");
  r.optimizer.momentum = config.real("opt.momentum");
  r.optimizer.weight_decay = config.real("opt.weight_decay");
  r.moco_momentum = config.real("moco.m");
  r.queue_size = config.count("moco.queue");
  r.epochs = config.count("train.epochs");
  r.batch = config.count("train.batch");
  r.kmeans_k = config.count("kmeans.k");
  r.kmeans_iters = config.count("kmeans.iters");
  r.augmentation = augmentation_config(config);
  r.eval_every = config.count("train.eval_every");
  return r;
}

// ---------------------------------------------------------------------------
// Toy benchmark.

ToyTrial toy_trial(const ExperimentConfig& config, std::uint64_t seed) {
  const auto spec = toy_spec(config);
  const auto tc = critic_config(config);
  const auto n = config.count("toy.n");
  const auto eval_n = config.count("toy.eval_n");
  Rng root(seed);
  Rng data_rng = root.split(0), train_rng = root.split(1), eval_rng = root.split(2);
  const auto train = keyed("toy.n", [&] { return sample_pairs(spec, n, data_rng); });
  const auto eval = keyed("toy.eval_n", [&] { return sample_pairs(spec, eval_n, eval_rng); });
  ToyTrial t;
  t.critic = keyed("toy.train_k", [&] { return train_critic(train, tc, train_rng); });
  t.eval_sims = t.critic.similarity_matrix(eval);
  t.estimate_rng = root.split(3);
  return t;
}

ToyMiResult run_toy_mi(const ExperimentConfig& config, std::size_t threads) {
  const auto seeds = seed_list(config);
  const auto omegas = config.reals("toy.omegas");
  const auto k = config.count("toy.k");
  for (double w : omegas) keyed("toy.omegas", [&] { RingSpec{w, 1.0}.validate(); });

  std::vector<EstimateRecord> nce(seeds.size());
  std::vector<std::vector<EstimateRecord>> cnce(omegas.size(), std::vector<EstimateRecord>(seeds.size()));
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const auto trial = toy_trial(config, seeds[s]);
    // Every estimator replays the same draws (common random numbers).
    Rng r = trial.estimate_rng;
    nce[s] = keyed("toy.k", [&] { return nce_estimate(trial.eval_sims, k, r); });
    for (std::size_t w = 0; w < omegas.size(); ++w) {
      Rng rw = trial.estimate_rng;
      cnce[w][s] = keyed("toy.omegas", [&] { return cnce_estimate(trial.eval_sims, k, RingSpec{omegas[w], 1.0}, rw); });
    }
  });

  ToyMiResult out;
  out.true_mi = analytic_mi(toy_spec(config).joint());
  out.nce = combine_seeds(nce);
  for (const auto& per : cnce) out.cnce.push_back(combine_seeds(per));
  return out;
}

namespace {

std::string stdev_cell(const EstimateRecord& r) { return r.per_seed.size() < 2 ? "n/a" : format_real(r.std); }

}  // namespace

std::string toy_mi_csv(const ToyMiResult& result) {
  std::ostringstream o;
  o << "estimator,omega,mean,stdev,seeds\n";
  o << "true,," << format_real(result.true_mi) << ",0," << result.nce.per_seed.size() << "\n";
  o << "nce,0," << format_real(result.nce.mean) << "," << stdev_cell(result.nce) << "," << result.nce.per_seed.size()
    << "\n";
  for (const auto& r : result.cnce)
    o << "cnce," << format_real(r.omega->lower) << "," << format_real(r.mean) << "," << stdev_cell(r) << ","
      << r.per_seed.size() << "\n";
  return o.str();
}

BiasVarianceReport run_bias_var(const ExperimentConfig& config, const RingSpec& spec) {
  keyed("biasvar.omega_lower", [&] { spec.validate(); });
  const auto trial = toy_trial(config, config.u64("run.seed"));
  Rng r = trial.estimate_rng;
  const double mi = analytic_mi(toy_spec(config).joint());
  return keyed("biasvar.trials", [&] {
    return bias_variance(trial.eval_sims, config.count("toy.k"), spec, config.count("biasvar.trials"),
                         config.count("biasvar.anchors"), mi, r);
  });
}

std::string bias_var_csv(const BiasVarianceReport& report) {
  std::ostringstream o;
  o << "support,bias,variance,trials\n";
  auto row = [&](const SupportStats& s) {
    o << s.support << "," << format_real(s.bias) << "," << format_real(s.variance) << "," << s.trials << "\n";
  };
  row(report.p);
  row(report.q);
  if (report.complement) row(*report.complement);
  return o.str();
}

CounterexampleResult run_counterexample(const ExperimentConfig& config, std::size_t threads) {
  const auto seeds = seed_list(config);
  auto fractions = config.reals("counter.fractions");
  const auto k = config.count("toy.k");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("counter.fractions", "config key 'counter.fractions': fractions must lie in (0, 1]");

  std::vector<std::vector<EstimateRecord>> per(fractions.size(), std::vector<EstimateRecord>(seeds.size()));
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const auto trial = toy_trial(config, seeds[s]);
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      Rng r = trial.estimate_rng;
      per[f][s] = keyed("counter.fractions", [&] { return adversarial_estimate(trial.eval_sims, k, fractions[f], r); });
    }
  });

  CounterexampleResult out;
  out.true_mi = analytic_mi(toy_spec(config).joint());
  out.fractions = fractions;
  for (const auto& p : per) out.estimates.push_back(combine_seeds(p));
  return out;
}

std::string counterexample_csv(const CounterexampleResult& result) {
  std::ostringstream o;
  o << "estimator,epsilon_fraction,mean,stdev,min,seeds\n";
  const std::size_t nseeds = result.estimates.empty() ? 0 : result.estimates.front().per_seed.size();
  o << "true,," << format_real(result.true_mi) << ",0," << format_real(result.true_mi) << "," << nseeds << "\n";
  for (std::size_t f = 0; f < result.fractions.size(); ++f) {
    const auto& r = result.estimates[f];
    const double lo = *std::min_element(r.per_seed.begin(), r.per_seed.end());
    o << "adversarial," << format_real(result.fractions[f]) << "," << format_real(r.mean) << "," << stdev_cell(r)
      << "," << format_real(lo) << "," << r.per_seed.size() << "\n";
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Instance discrimination.

Variant parse_variant(const std::string& name) {
  Variant v;
  v.name = name;
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string p; std::getline(ss, p, '-');) parts.push_back(p);
  auto bad = [&] { return std::invalid_argument("unknown variant '" + name + "'"); };
  if (parts.empty() || parts.size() > 3) throw bad();
  v.method = parse_method(parts[0]);
  if (parts.size() >= 2) {
    const auto& m = parts[1];
    if (m == "ring") v.ring = RingMode::ring;
    else if (m == "ball") v.ring = RingMode::ball;
    else if (m == "cave") v.ring = RingMode::cave;
    else if (m == "ringc") v.ring = RingMode::ring_plus_close;
    else if (m == "full") {
      v.ring = RingMode::ring;
      v.full_support = true;
    } else throw bad();
  }
  if (parts.size() == 3) {
    if (parts[2] != "noanneal" || v.ring == RingMode::cave || v.full_support) throw bad();
    v.anneal = false;
  }
  return v;
}

RunConfig variant_config(const RunConfig& base, const Variant& variant) {
  RunConfig r = base;
  r.method = variant.method;
  r.ring = variant.ring;
  if (variant.full_support) {
    r.spec = RingSpec{0.0, 1.0};
    r.schedule = Schedule{};
    r.schedule.kind = ScheduleKind::constant;
  } else if (!variant.anneal) {
    r.schedule.kind = ScheduleKind::constant;
    r.schedule.start_omega = r.schedule.end_omega;
    r.schedule.breakpoints.clear();
  }
  if (variant.ring == RingMode::ball) r.spec.upper = 1.0;
  return r;
}

InstdiscSetup instdisc_setup(const ExperimentConfig& config, std::uint64_t seed) {
  Rng root(seed);
  Rng data_rng = root.split(10), split_rng = root.split(11);
  InstdiscSetup s;
  s.data = keyed("data.classes", [&] {
    return make_synthetic(config.count("data.classes"), config.count("data.per_class"), config.count("data.dim"),
                          config.real("data.class_scale"), config.real("data.noise_scale"), data_rng);
  });
  s.split = keyed("data.train_fraction",
                  [&] { return split_dataset(s.data.size(), config.real("data.train_fraction"), split_rng); });
  return s;
}

InstdiscResult run_instdisc(const ExperimentConfig& config, std::size_t threads) {
  InstdiscResult out;
  out.seeds = seed_list(config);
  out.variants = config.texts("instdisc.variants");
  if (out.variants.empty())
    throw ConfigError("instdisc.variants", "config key 'instdisc.variants': need at least one variant");
  std::vector<Variant> variants;
  for (const auto& v : out.variants) variants.push_back(keyed("instdisc.variants", [&] { return parse_variant(v); }));
  const RunConfig base = run_config(config);

  const std::size_t nv = variants.size(), ns = out.seeds.size();
  out.accuracy.assign(nv, std::vector<double>(ns));
  out.logs.assign(nv, std::vector<std::vector<EpochLog>>(ns));
  // Validate every variant up front so a bad config fails before training.
  {
    const auto probe = instdisc_setup(config, out.seeds.front());
    for (const auto& v : variants) {
      auto rc = variant_config(base, v);
      keyed("instdisc.variants", [&] { rc.validate(probe.split.train.size()); });
    }
  }
  parallel_for(nv * ns, threads, [&](std::size_t job) {
    const std::size_t v = job / ns, s = job % ns;
    const auto setup = instdisc_setup(config, out.seeds[s]);
    RunConfig rc = variant_config(base, variants[v]);
    rc.seed = out.seeds[s];
    auto result = train(rc, setup.data, setup.split);
    out.accuracy[v][s] = result.final_accuracy;
    out.logs[v][s] = std::move(result.log);
  });
  return out;
}

nlohmann::json InstdiscResult::summary() const {
  // Spread is undefined for a single seed.
  const auto spread = [&](double v) { return seeds.size() > 1 ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["seeds"] = seeds;
  nlohmann::json methods = nlohmann::json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto ms = mean_std(accuracy[v]);
    methods.push_back({{"variant", variants[v]},
                       {"final_accuracy", accuracy[v]},
                       {"mean", ms.mean},
                       {"stdev", spread(ms.std)}});
  }
  j["variants"] = methods;
  nlohmann::json deltas = nlohmann::json::array();
  for (std::size_t a = 0; a < variants.size(); ++a)
    for (std::size_t b = 0; b < variants.size(); ++b) {
      if (a == b) continue;
      std::vector<double> d(seeds.size());
      for (std::size_t s = 0; s < seeds.size(); ++s) d[s] = accuracy[a][s] - accuracy[b][s];
      const auto ms = mean_std(d);
      deltas.push_back({{"variant", variants[a]},
                        {"baseline", variants[b]},
                        {"per_seed", d},
                        {"mean", ms.mean},
                        {"stdev", spread(ms.std)},
                        {"stderr", spread(ms.std / std::sqrt(static_cast<double>(seeds.size())))}});
    }
  j["paired_deltas"] = deltas;
  return j;
}

// ---------------------------------------------------------------------------
// Phase study.

std::vector<std::vector<double>> PhaseResult::mean() const {
  std::vector<std::vector<double>> m(branch_epochs.size(), std::vector<double>(omegas.size(), 0.0));
  for (const auto& g : per_seed)
    for (std::size_t b = 0; b < branch_epochs.size(); ++b)
      for (std::size_t w = 0; w < omegas.size(); ++w) m[b][w] += g.accuracy[b][w] / static_cast<double>(per_seed.size());
  return m;
}

PhaseResult run_phase_study(const ExperimentConfig& config, std::size_t threads) {
  PhaseResult out;
  const auto seeds = seed_list(config);
  out.branch_epochs = config.counts("phase.branch_epochs");
  out.omegas = config.reals("phase.omegas");
  if (out.branch_epochs.empty() || out.omegas.empty())
    throw ConfigError("phase.omegas", "config key 'phase.omegas': need at least one branch epoch and one omega");
  const RingMode ring = keyed("phase.ring", [&] { return parse_ring_mode(config.text("phase.ring")); });
  const RunConfig base = run_config(config);
  for (double w : out.omegas) keyed("phase.omegas", [&] { RingSpec{w, ring == RingMode::ball ? 1.0 : base.spec.upper}.validate(); });

  out.per_seed.resize(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const auto setup = instdisc_setup(config, seeds[s]);
    RunConfig rc = base;
    rc.seed = seeds[s];
    out.per_seed[s] = keyed("phase.branch_epochs", [&] {
      return hardness_phase_study(rc, setup.data, setup.split, out.branch_epochs, out.omegas, ring);
    });
  });
  return out;
}

std::string phase_csv(const PhaseResult& result) {
  std::ostringstream o;
  o << "branch_epoch,omega,mean_accuracy,stdev,seeds\n";
  for (std::size_t b = 0; b < result.branch_epochs.size(); ++b)
    for (std::size_t w = 0; w < result.omegas.size(); ++w) {
      std::vector<double> v;
      for (const auto& g : result.per_seed) v.push_back(g.accuracy[b][w]);
      const auto ms = mean_std(v);
      o << result.branch_epochs[b] << "," << format_real(result.omegas[w]) << "," << format_real(ms.mean) << ","
        << (v.size() < 2 ? std::string("n/a") : format_real(ms.std)) << "," << v.size() << "\n";
    }
  return o.str();
}

// ---------------------------------------------------------------------------

OutputFiles run_command(const std::string& command, const ExperimentConfig& config, std::size_t threads) {
  OutputFiles files;
  files.emplace_back("config.txt", config.resolved());
  if (command == "toy-mi") {
    files.emplace_back("toy_mi.csv", toy_mi_csv(run_toy_mi(config, threads)));
  } else if (command == "bias-var") {
    const RingSpec spec{config.real("biasvar.omega_lower"), config.real("biasvar.omega_upper")};
    files.emplace_back("bias_var.csv", bias_var_csv(run_bias_var(config, spec)));
  } else if (command == "counterexample") {
    files.emplace_back("counterexample.csv", counterexample_csv(run_counterexample(config, threads)));
  } else if (command == "instdisc") {
    const auto r = run_instdisc(config, threads);
    for (std::size_t v = 0; v < r.variants.size(); ++v)
      for (std::size_t s = 0; s < r.seeds.size(); ++s) {
        std::ostringstream o;
        write_metrics_csv(o, r.logs[v][s]);
        files.emplace_back("metrics_" + r.variants[v] + "_seed" + std::to_string(r.seeds[s]) + ".csv", o.str());
      }
    files.emplace_back("summary.json", r.summary().dump(2) + "\n");
  } else if (command == "phase-study") {
    files.emplace_back("phase_grid.csv", phase_csv(run_phase_study(config, threads)));
  } else {
    throw std::invalid_argument("unknown command '" + command + "'");
  }
  return files;
}

}  // namespace cnce
