#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>

#include "cnce/config.hpp"
#include "cnce/experiments.hpp"

using namespace cnce;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return ExperimentConfig::parse(in);
}

// A tiny instdisc setup so experiment plumbing runs in well under a second.
ExperimentConfig tiny_instdisc() {
  return parse(
      "run.seeds = 2\n"
      "data.classes = 3\ndata.per_class = 10\ndata.dim = 4\n"
      "model.hidden = 8\nmodel.out_dim = 4\n"
      "train.k = 8\ntrain.epochs = 2\ntrain.batch = 8\ntrain.eval_every = 1\n"
      "ring.omega_upper = 0.9\nschedule.end = 0.5\nschedule.max = 0.5\nschedule.horizon = 1\n"
      "kmeans.k = 3\nmoco.queue = 16\n"
      "instdisc.variants = ir, ir-ring, ir-ring-noanneal\n"
      "phase.branch_epochs = 0, 1\nphase.omegas = 0, 0.5\n");
}

}  // namespace

TEST(Config, ParsesOverridesAndComments) {
  const auto c = parse("# comment\n\n  toy.tau = 2.5  # trailing\nrun.seeds=3\n");
  EXPECT_EQ(c.real("toy.tau"), 2.5);
  EXPECT_EQ(c.count("run.seeds"), 3u);
  EXPECT_EQ(c.real("toy.n"), 2000.0);
  EXPECT_EQ(c.reals("toy.omegas").size(), 6u);
}

TEST(Config, UnknownKeyNamesOffender) {
  try {
    parse("ring.omega_lowr = 0.5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "ring.omega_lowr");
  }
  EXPECT_THROW(parse("no equals sign\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::defaults().text("nope"), ConfigError);
}

TEST(Config, TypedAccessErrors) {
  const auto c = parse("toy.tau = fast\nrun.seeds = -2\n");
  EXPECT_THROW(c.real("toy.tau"), ConfigError);
  EXPECT_THROW(c.count("run.seeds"), ConfigError);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/path.cfg"), ConfigError);
}

TEST(Config, ResolvedIsSortedAndHashStable) {
  const auto a = ExperimentConfig::defaults();
  const auto b = parse("");
  EXPECT_EQ(a.resolved(), b.resolved());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  const auto c = parse("toy.tau = 2\n");
  EXPECT_NE(a.hash(), c.hash());
  const std::string r = a.resolved();
  EXPECT_LT(r.find("aug.dropout = "), r.find("toy.tau = "));
}

TEST(Experiments, FormatReal) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(2.0), "2");
}

TEST(Experiments, ParallelForCoversEveryIndexOnceAndRethrows) {
  for (std::size_t threads : {1u, 3u}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, threads, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(10, threads,
                              [](std::size_t i) {
                                if (i == 7) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
  }
}

TEST(Experiments, VariantNames) {
  const auto v = parse_variant("ir-ring-noanneal");
  EXPECT_EQ(v.method, Method::ir);
  EXPECT_EQ(v.ring, RingMode::ring);
  EXPECT_FALSE(v.anneal);
  EXPECT_EQ(parse_variant("moco").ring, RingMode::off);
  EXPECT_EQ(parse_variant("ir-ringc").ring, RingMode::ring_plus_close);
  EXPECT_TRUE(parse_variant("ir-full").full_support);
  EXPECT_THROW(parse_variant("ir-cave-noanneal"), std::invalid_argument);
  EXPECT_THROW(parse_variant("ir-donut"), std::invalid_argument);
  EXPECT_THROW(parse_variant("simclr"), std::invalid_argument);

  RunConfig base;
  base.schedule.kind = ScheduleKind::linear;
  base.schedule.end_omega = 0.7;
  const auto r = variant_config(base, v);
  EXPECT_EQ(r.schedule.kind, ScheduleKind::constant);
  EXPECT_EQ(r.schedule.start_omega, 0.7);
}

TEST(Experiments, BadValuesBecomeConfigErrors) {
  auto c = tiny_instdisc();
  c.set("instdisc.variants", "ir-donut");
  EXPECT_THROW(run_instdisc(c), ConfigError);
  c = tiny_instdisc();
  c.set("schedule.kind", "cosine");
  EXPECT_THROW(run_instdisc(c), ConfigError);
  c = tiny_instdisc();
  c.set("run.seeds", "0");
  EXPECT_THROW(run_instdisc(c), ConfigError);
  EXPECT_THROW(run_command("fly", c), std::invalid_argument);
}

TEST(Experiments, InstdiscIndependentOfThreadCount) {
  const auto c = tiny_instdisc();
  const auto a = run_command("instdisc", c, 1), b = run_command("instdisc", c, 4);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.front().first, "config.txt");
  EXPECT_EQ(a.back().first, "summary.json");
  const auto r = run_instdisc(c);
  EXPECT_EQ(r.accuracy.size(), 3u);
  const auto j = r.summary();
  EXPECT_EQ(j["variants"].size(), 3u);
  EXPECT_EQ(j["paired_deltas"].size(), 6u);
}

TEST(Experiments, PhaseStudyCsv) {
  const auto c = tiny_instdisc();
  const auto a = run_command("phase-study", c, 1), b = run_command("phase-study", c, 2);
  EXPECT_EQ(a, b);
  const std::string& csv = a.back().second;
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "branch_epoch,omega,mean_accuracy,stdev,seeds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Experiments, ToyCsvFlagsSingleSeedStdev) {
  const auto c = parse("run.seeds = 1\ntoy.n = 200\ntoy.eval_n = 200\ntoy.epochs = 1\ntoy.k = 20\ntoy.train_k = 20\n");
  const auto files = run_command("toy-mi", c);
  const std::string& csv = files.back().second;
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "estimator,omega,mean,stdev,seeds");
  EXPECT_NE(csv.find("nce,0,"), std::string::npos);
  EXPECT_NE(csv.find(",n/a,1\n"), std::string::npos);
  const auto bv = run_command("bias-var", parse("toy.n = 200\ntoy.eval_n = 200\ntoy.epochs = 1\ntoy.k = 20\n"
                                                "toy.train_k = 20\nbiasvar.trials = 100\nbiasvar.anchors = 10\n"));
  EXPECT_EQ(bv.back().second.substr(0, 29), "support,bias,variance,trials\n");
}
