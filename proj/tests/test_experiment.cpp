#include "pour/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace pour;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick(Variant v) {
  ExperimentConfig c;
  c.samples_per_class = 60;
  c.test_samples_per_class = 60;
  c.train.steps = 600;
  c.unlearn.variant = v;
  c.unlearn.forget_class = 1;
  c.unlearn.pour_d_train.steps = 200;
  c.unlearn.baseline_train.steps = 100;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(POUR_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Gate, CleanRunNeverTouchesRetainedRows) {
  std::size_t seen_during = 99;
  RunHooks hooks;
  hooks.during_unlearn = [&](const ForgetOnlyGate& g) {
    EXPECT_TRUE(g.sealed());
    seen_during = g.violations();
  };
  const RunOutput o = run_experiment(quick(Variant::pour_d), hooks);
  EXPECT_EQ(seen_during, 0u);
  EXPECT_EQ(o.manifest.retained_rows_seen_by_unlearn, 0u);
}

TEST(Gate, RetainedAccessDuringUnlearnIsFatal) {
  RunHooks hooks;
  hooks.during_unlearn = [](const ForgetOnlyGate& g) { (void)g.retained_set().size(); };
  try {
    run_experiment(quick(Variant::pour_p), hooks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::protocol);
  }
}

TEST(Gate, CountsOnlyWhileSealed) {
  const FeatureMatrix x = sample_nc_features({make_etf(3, 2, 0), 0.1, 4, 0});
  ForgetOnlyGate g(x, 0);
  (void)g.retained_set();
  g.seal();
  (void)g.forget_set();
  EXPECT_EQ(g.violations(), 0u);
  (void)g.retained_set();
  EXPECT_EQ(g.violations(), 1u);
}

TEST(RunExperiment, PourPAtZeroNoiseForgetsCompletely) {
  ExperimentConfig c = quick(Variant::pour_p);
  c.sigma = 0.0;
  c.model_kind = ModelKind::nc_oracle;
  c.rmia = false;
  const RunOutput o = run_experiment(c);
  EXPECT_DOUBLE_EQ(*o.manifest.metrics.acc_f, 0.0);
  EXPECT_DOUBLE_EQ(*o.manifest.metrics.acc_r, 1.0);
  EXPECT_DOUBLE_EQ(*o.manifest.metrics.aus, 1.0);
  ASSERT_TRUE(o.manifest.uniformity.has_value());
  EXPECT_EQ(o.manifest.uniformity->max_softmax_deviation, 0.0);
  EXPECT_FALSE(o.manifest.metrics.cka_f_o.has_value());
  EXPECT_NEAR(*o.manifest.head_gram_residual, 0.0, 1e-12);
}

TEST(RunExperiment, PourDEndToEnd) {
  ExperimentConfig c = quick(Variant::pour_d);
  c.rus_r = true;
  const RunOutput o = run_experiment(c);
  EXPECT_EQ(o.manifest.losses.size(), 200u);
  ASSERT_TRUE(o.manifest.metrics.rus_o.has_value());
  ASSERT_TRUE(o.manifest.metrics.rus_r.has_value());
  EXPECT_GE(*o.manifest.metrics.rus_o, 0.0);
  EXPECT_LE(*o.manifest.metrics.rus_o, 1.0);
  EXPECT_LT(*o.manifest.metrics.acc_f, 0.05);
  EXPECT_TRUE(o.reference.has_value());
  EXPECT_EQ(o.manifest.variant, "pour_d");
}

TEST(RunExperiment, CkaAfterProjectionFlag) {
  ExperimentConfig c = quick(Variant::pour_p);
  c.cka_after_projection = true;
  c.cka_whole_distribution = true;
  const RunOutput o = run_experiment(c);
  EXPECT_TRUE(o.manifest.metrics.cka_f_o.has_value());
  EXPECT_TRUE(o.manifest.cka_whole_o.has_value());
}

TEST(RunExperiment, DegenerateCkaBecomesNote) {
  ExperimentConfig c = quick(Variant::pour_p);
  c.sigma = 0.0;
  c.model_kind = ModelKind::nc_oracle;
  c.rmia = false;
  c.cka_after_projection = true;
  const RunOutput o = run_experiment(c);
  EXPECT_FALSE(o.manifest.metrics.cka_f_o.has_value());
  EXPECT_FALSE(o.manifest.notes.empty());
}

TEST(RunExperiment, BaselinesRun) {
  for (Variant v : {Variant::random_label, Variant::gradient_ascent}) {
    const RunOutput o = run_experiment(quick(v));
    EXPECT_FALSE(o.unlearned.projector.has_value());
    EXPECT_EQ(o.manifest.losses.size(), 100u);
  }
}

TEST(RunExperiment, AlphaSweepAndBounds) {
  ExperimentConfig c = quick(Variant::pour_d);
  c.unlearn.snapshot_every = 20;
  c.bounds = true;
  c.bound_trials = 3;
  const RunOutput o = run_experiment(c);
  ASSERT_TRUE(o.manifest.alpha.has_value());
  EXPECT_EQ(o.manifest.alpha->points.size(), 11u);
  EXPECT_EQ(o.manifest.bounds.size(), 3u);
}

TEST(RunExperiment, DeterministicManifest) {
  const ExperimentConfig c = quick(Variant::pour_d);
  const RunOutput a = run_experiment(c);
  const RunOutput b = run_experiment(c);
  EXPECT_EQ(a.manifest.metrics, b.manifest.metrics);
  EXPECT_EQ(render_json({a.manifest}), render_json({b.manifest}));
}

TEST(RunExperiment, ErrorsCarryStage) {
  ExperimentConfig c = quick(Variant::pour_d);
  c.train.step_size = 1e200;
  try {
    run_experiment(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite_loss);
    EXPECT_NE(std::string(e.what()).find("stage train"), std::string::npos) << e.what();
  }
}

TEST(RunSweep, SeedsIncrement) {
  ExperimentConfig c = quick(Variant::pour_p);
  c.seed = 10;
  const auto runs = run_sweep(c, 2);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].manifest.seed, 10u);
  EXPECT_EQ(runs[1].manifest.seed, 11u);
}

TEST(Cli, StagesAndExitCodes) {
  const fs::path dir = fs::temp_directory_path() / "pour_cli_stages";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << R"({"C": 4, "d": 3, "samples_per_class": 40, "train": {"steps": 300},
    "unlearn": {"variant": "pour_d", "pour_d": {"steps": 50}}})";
  const std::string common = "--config " + cfg.string() + " --out " + (dir / "out").string();
  EXPECT_EQ(run_cli("unlearn " + common), 4);  // nothing generated yet
  EXPECT_EQ(run_cli("gen " + common), 0);
  EXPECT_EQ(run_cli("train " + common), 0);
  EXPECT_EQ(run_cli("unlearn " + common), 0);
  EXPECT_EQ(run_cli("eval " + common + " --format json"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
  EXPECT_EQ(run_cli("bound-check " + common), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "bounds.csv"));

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"C": 6, "d": 2})";
  EXPECT_EQ(run_cli("run --config " + bad.string()), 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli("run --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("run " + common + " --format xml"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "absent.json").string()), 4);

  fs::resize_file(dir / "out" / "original.pour", 10);
  EXPECT_EQ(run_cli("unlearn " + common), 4);
}
